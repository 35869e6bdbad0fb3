"""Planning over a finite set of candidate MDPs.

Robust value iteration lets an adversary pick the worst candidate
separately at every state-action pair. The minimax-regret approximation
runs the same robust recursion on a regret-based cost: in candidate ``i``,
taking action ``a`` in state ``s`` costs its advantage
``Q*_i(s, a) - V*_i(s)``. Option policies hold the candidate fixed for
``n`` steps at a time, so correlations inside an option are respected.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .matrix_game import solve_matrix_game
from .mdp import InvalidMdpError, Mdp, Policy, _parse_rows, _shared_fields, _tables_from_rows, shared_to_dict, transitions_to_list
from .solvers import greedy, policy_evaluation, q_values

MAX_SWEEPS = 100_000
DEFAULT_PLAN_CAP = 10**5
DEFAULT_POLICY_CAP = 10**5


class PlanCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int, what: str = "plans"):
        super().__init__(f"enumeration needs {count} {what}, cap is {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True, eq=False)
class SampleUncertainMdp:
    """Candidate MDPs sharing everything except transitions and costs."""

    samples: tuple[Mdp, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise InvalidMdpError("need at least one sample MDP")
        ref = samples[0]
        for i, m in enumerate(samples[1:], 1):
            same = (
                m.P.shape == ref.P.shape
                and m.gamma == ref.gamma
                and m.horizon == ref.horizon
                and m.initial_state == ref.initial_state
                and m.terminals == ref.terminals
            )
            if not same:
                raise InvalidMdpError(f"sample {i} does not share the shape/gamma/horizon/start/terminals of sample 0")
        object.__setattr__(self, "samples", samples)

    @property
    def ref(self) -> Mdp:
        return self.samples[0]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_states(self) -> int:
        return self.ref.num_states

    @property
    def num_actions(self) -> int:
        return self.ref.num_actions

    @property
    def gamma(self) -> float:
        return self.ref.gamma

    @property
    def horizon(self) -> int | None:
        return self.ref.horizon

    @property
    def n_stages(self) -> int:
        return self.ref.n_stages

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Transition and cost tables stacked on a trailing sample axis, (S, A, S, I)."""
        P = np.stack([m.P for m in self.samples], axis=-1)
        C = np.stack([m.C for m in self.samples], axis=-1)
        return P, C


def uncertain_from_dict(doc) -> SampleUncertainMdp:
    """Parse ``{"shared": <MDP header>, "samples": [{"transitions": [...]}, ...]}``."""
    try:
        shared, blocks = _shared_fields(doc["shared"]), doc["samples"]
    except (KeyError, TypeError) as exc:
        raise InvalidMdpError(f"uncertain MDP needs 'shared' and 'samples' ({exc})") from None
    S, A = shared.pop("num_states"), shared.pop("num_actions")
    samples = []
    for i, block in enumerate(blocks):
        rows = _parse_rows(S, A, block.get("transitions", []), block=f"samples[{i}].transitions")
        P, C = _tables_from_rows(S, A, rows, shared["terminals"])
        samples.append(Mdp(P, C, **shared))
    return SampleUncertainMdp(tuple(samples))


def uncertain_to_dict(u: SampleUncertainMdp) -> dict:
    return {"shared": shared_to_dict(u.ref), "samples": [{"transitions": transitions_to_list(m)} for m in u.samples]}


def _robust_backup(u: SampleUncertainMdp, w_next: np.ndarray) -> np.ndarray:
    """Per-sample Q-values, shape (S, A, I)."""
    return np.stack([q_values(m, w_next) for m in u.samples], axis=-1)


def robust_value_iteration(u: SampleUncertainMdp, tol: float = 1e-10) -> tuple[np.ndarray, Policy]:
    """Best expected cost against a per-(s, a) worst-case choice of sample."""
    S, A = u.num_states, u.num_actions
    if u.horizon is not None:
        w = np.zeros(S)
        actions = np.zeros((u.horizon, S), dtype=int)
        for t in reversed(range(u.horizon)):
            q = _robust_backup(u, w).max(axis=2)
            actions[t] = greedy(q)
            w = q.min(axis=1)
        return w, Policy(np.eye(A)[actions])
    w = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        w_new = _robust_backup(u, w).max(axis=2).min(axis=1)
        done = u.gamma * np.max(np.abs(w_new - w)) <= tol
        w = w_new
        if done:
            break
    return w, Policy.deterministic(greedy(_robust_backup(u, w).max(axis=2)), A)


# ------------------------------------------------------------------ regret cost

def optimal_stage_values(mdp: Mdp, tol: float = 1e-10) -> np.ndarray:
    """Optimal values by stage, shape (H + 1, S) with a zero last row, or (1, S)."""
    if mdp.horizon is None:
        v = np.zeros(mdp.num_states)
        for _ in range(MAX_SWEEPS):
            v_new = q_values(mdp, v).min(axis=1)
            done = mdp.gamma * np.max(np.abs(v_new - v)) <= tol
            v = v_new
            if done:
                break
        return v[None]
    V = np.zeros((mdp.horizon + 1, mdp.num_states))
    for t in reversed(range(mdp.horizon)):
        V[t] = q_values(mdp, V[t + 1]).min(axis=1)
    return V


@dataclass(frozen=True, eq=False)
class RegretCostTable:
    """Advantages ``table[t, s, a, i] = Q*_i(s, a) - V*_i(s)`` by stage."""

    table: np.ndarray
    optimal_values: np.ndarray  # (stages, S, I) optimal values per sample

    def at(self, t: int) -> np.ndarray:
        return self.table[min(t, self.table.shape[0] - 1)]


def regret_cost(u: SampleUncertainMdp, tol: float = 1e-10) -> RegretCostTable:
    stages = u.n_stages
    adv = np.zeros((stages, u.num_states, u.num_actions, len(u)))
    opt = np.zeros((stages, u.num_states, len(u)))
    for i, m in enumerate(u.samples):
        V = optimal_stage_values(m, tol)
        for t in range(stages):
            nxt = V[0] if m.horizon is None else V[t + 1]
            q = q_values(m, nxt)
            adv[t, :, :, i] = q - q.min(axis=1, keepdims=True)
            opt[t, :, i] = q.min(axis=1)
    return RegretCostTable(adv, opt)


# ------------------------------------------------------- minimax-regret approx

def _regret_matrices(u: SampleUncertainMdp, adv: np.ndarray, w_next: np.ndarray) -> np.ndarray:
    """Per-state game matrices ``M[s, a, i] = A_i(s, a) + gamma sum P_i W``."""
    cont = np.stack([m.P @ w_next for m in u.samples], axis=-1)
    return adv + u.gamma * cont


def _state_choice(M: np.ndarray, stochastic: bool) -> tuple[np.ndarray, float]:
    if stochastic:
        return solve_matrix_game(M)
    worst = M.max(axis=1)
    a = int(greedy(worst))
    return np.eye(M.shape[0])[a], float(worst[a])


def _regret_sweep(u, adv, w_next, stochastic):
    S = u.num_states
    M = _regret_matrices(u, adv, w_next)
    probs = np.zeros((S, u.num_actions))
    w = np.zeros(S)
    for s in range(S):
        probs[s], w[s] = _state_choice(M[s], stochastic)
    return w, probs


def solve_minimax_regret_approx(
    u: SampleUncertainMdp, tol: float = 1e-10, stochastic: bool = False
) -> tuple[np.ndarray, Policy]:
    """Robust dynamic programming on the regret-based cost.

    With ``stochastic=True`` each state solves a matrix game over actions
    and samples, allowing mixed actions.
    """
    rc = regret_cost(u, tol)
    S = u.num_states
    if u.horizon is not None:
        w = np.zeros(S)
        probs = np.zeros((u.horizon, S, u.num_actions))
        for t in reversed(range(u.horizon)):
            w, probs[t] = _regret_sweep(u, rc.at(t), w, stochastic)
        return w, Policy(probs)
    w = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        w_new, probs = _regret_sweep(u, rc.at(0), w, stochastic)
        done = u.gamma * np.max(np.abs(w_new - w)) <= tol
        w = w_new
        if done:
            break
    _, probs = _regret_sweep(u, rc.at(0), w, stochastic)
    return w, Policy(probs)


def robust_policy_evaluation(
    u: SampleUncertainMdp, policy: Policy, cost: str = "cost", tol: float = 1e-10
) -> np.ndarray:
    """Value of a fixed policy against a per-state adversarial sample choice.

    ``cost="regret"`` evaluates on the regret-based cost instead of the
    samples' own costs.
    """
    S = u.num_states
    adv = regret_cost(u, tol) if cost == "regret" else None

    def backup(w_next, t):
        if adv is None:
            M = _robust_backup(u, w_next)
        else:
            M = _regret_matrices(u, adv.at(t), w_next)
        return np.einsum("sa,sai->si", policy.at(t), M).max(axis=1)

    if u.horizon is not None:
        w = np.zeros(S)
        for t in reversed(range(u.horizon)):
            w = backup(w, t)
        return w
    w = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        w_new = backup(w, 0)
        done = u.gamma * np.max(np.abs(w_new - w)) <= tol
        w = w_new
        if done:
            break
    return w


# --------------------------------------------------------------------- options

@dataclass(frozen=True)
class OptionPolicy:
    """``n``-step contingency plans keyed by ``(boundary stage, state)``.

    A plan is ``(action, {successor: subplan})``; an empty dict ends it.
    Stationary problems use boundary stage 0 for every option.
    """

    n: int
    plans: dict

    def plan(self, t: int, s: int):
        key = (t, s) if (t, s) in self.plans else (0, s)
        return self.plans[key]


def _plan_successors(u: SampleUncertainMdp, s: int, a: int) -> np.ndarray:
    support = np.zeros(u.num_states, dtype=bool)
    for m in u.samples:
        support |= m.P[s, a] > 0
    return np.flatnonzero(support)


def _pareto(vecs: list) -> list:
    """Drop vectors weakly dominated by an earlier-or-better one; keep first of equals."""
    kept: list = []
    for v, plan in vecs:
        if any(np.all(k <= v + 1e-12) for k, _ in kept):
            continue
        kept = [(k, p) for k, p in kept if not np.all(v <= k + 1e-12)]
        kept.append((v, plan))
    return kept


class _OptionEnumerator:
    def __init__(self, u: SampleUncertainMdp, adv: RegretCostTable, cap: int):
        self.u = u
        self.adv = adv
        self.cap = cap
        self.P = np.stack([m.P for m in u.samples], axis=-1)

    def count(self, s: int, k: int, length: int, memo: dict) -> int:
        if k >= length or s in self.u.ref.terminals:
            return 1
        key = (s, k)
        if key not in memo:
            total = 0
            for a in range(self.u.num_actions):
                prod = 1
                for sp in _plan_successors(self.u, s, a):
                    prod *= self.count(int(sp), k + 1, length, memo)
                    if prod > self.cap:
                        break
                total += prod
                if total > self.cap:
                    break
            memo[key] = total
        return memo[key]

    def vectors(self, t: int, s: int, k: int, length: int, w_boundary: np.ndarray, memo: dict) -> list:
        """Pareto set of (per-sample regret vector, plan) from in-option depth ``k``."""
        I = len(self.u)
        if s in self.u.ref.terminals:
            return [(np.zeros(I), None)]
        if k >= length:
            return [(np.full(I, w_boundary[s]), None)]
        key = (s, k)
        if key in memo:
            return memo[key]
        gamma = self.u.gamma
        out = []
        for a in range(self.u.num_actions):
            base = self.adv.at(t + k)[s, a].copy()
            combos = [(base, {})]
            for sp in _plan_successors(self.u, s, a):
                sp = int(sp)
                weight = gamma * self.P[s, a, sp]
                sub = self.vectors(t, sp, k + 1, length, w_boundary, memo)
                combos = _pareto([
                    (vec + weight * sv, {**plan, sp: splan})
                    for vec, plan in combos
                    for sv, splan in sub
                ])
            out.extend((vec, (a, plan)) for vec, plan in combos)
        memo[key] = _pareto(out)
        return memo[key]


def _best_plan(vecs: list) -> tuple[float, tuple]:
    scores = [float(np.max(v)) for v, _ in vecs]
    best = min(scores)
    k = next(i for i, sc in enumerate(scores) if sc <= best + 1e-12)
    return scores[k], vecs[k][1]


def solve_minimax_regret_options(
    u: SampleUncertainMdp, n: int, tol: float = 1e-10, cap: int = DEFAULT_PLAN_CAP
) -> tuple[np.ndarray, OptionPolicy]:
    """Minimax regret over ``n``-step contingency plans with the sample fixed per option.

    Between options the sample may change (robust DP at option boundaries).
    Every deterministic plan is enumerated, with Pareto pruning of per-sample
    regret vectors; the plan count before pruning must stay under ``cap``.
    Returns boundary values (stage 0 for finite horizons) and the policy.
    """
    if n < 1:
        raise ValueError("option length must be at least 1")
    rc = regret_cost(u, tol)
    enum = _OptionEnumerator(u, rc, cap)
    S = u.num_states

    def boundary_sweep(t, length, w_next):
        count_memo: dict = {}
        w = np.zeros(S)
        plans = {}
        for s in range(S):
            count = enum.count(s, 0, length, count_memo)
            if count > cap:
                raise PlanCapExceeded(count, cap)
        vec_memo: dict = {}
        for s in range(S):
            if s in u.ref.terminals:
                plans[(t, s)] = None
                continue
            w[s], plans[(t, s)] = _best_plan(enum.vectors(t, s, 0, length, w_next, vec_memo))
        return w, plans

    if u.horizon is not None:
        boundaries = list(range(0, u.horizon, n))
        w = np.zeros(S)
        plans: dict = {}
        values = {}
        for t in reversed(boundaries):
            length = min(n, u.horizon - t)
            w, p = boundary_sweep(t, length, w)
            plans.update(p)
            values[t] = w
        return values[0], OptionPolicy(n, plans)
    w = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        w_new, plans = boundary_sweep(0, n, w)
        done = u.gamma**n * np.max(np.abs(w_new - w)) <= tol
        w = w_new
        if done:
            break
    return w, OptionPolicy(n, plans)


def option_policy_evaluation(mdp: Mdp, policy: OptionPolicy, tol: float = 1e-10) -> float:
    """Expected cost from the initial state of executing ``policy`` in ``mdp``."""
    gamma = mdp.gamma

    def run_plan(plan, s, t, depth, boundary_value):
        if s in mdp.terminals:
            return 0.0
        if plan is None or (depth > 0 and depth >= policy.n):
            return boundary_value(t, s)
        a, subplans = plan
        total = 0.0
        for sp, p, c in mdp.successors(s, a):
            if mdp.horizon is not None and t + 1 >= mdp.horizon:
                cont = 0.0
            elif depth + 1 >= policy.n:
                cont = boundary_value(t + 1, sp)
            else:
                cont = run_plan(subplans.get(sp), sp, t + 1, depth + 1, boundary_value)
            total += p * (c + gamma * cont)
        return total

    if mdp.horizon is not None:
        memo: dict = {}

        def value(t, s):
            if t >= mdp.horizon or s in mdp.terminals:
                return 0.0
            if (t, s) not in memo:
                memo[(t, s)] = run_plan(policy.plan(t, s), s, t, 0, value)
            return memo[(t, s)]

        return value(0, mdp.initial_state)

    E = np.zeros(mdp.num_states)
    for _ in range(MAX_SWEEPS):
        E_new = np.array([
            0.0 if s in mdp.terminals else run_plan(policy.plan(0, s), s, 0, 0, lambda t, x: E[x])
            for s in range(mdp.num_states)
        ])
        done = np.max(np.abs(E_new - E)) <= tol
        E = E_new
        if done:
            break
    return float(E[mdp.initial_state])


def robust_option_evaluation(u: SampleUncertainMdp, policy: OptionPolicy, tol: float = 1e-10) -> float:
    """Regret-cost value of an option policy with an adversarial sample per option."""
    rc = regret_cost(u, tol)
    P = np.stack([m.P for m in u.samples], axis=-1)
    I = len(u)
    gamma = u.gamma

    def plan_vector(plan, s, t, depth, boundary):
        if s in u.ref.terminals:
            return np.zeros(I)
        a, subplans = plan
        vec = rc.at(t)[s, a].copy()
        for sp in _plan_successors(u, s, a):
            sp = int(sp)
            if u.horizon is not None and t + 1 >= u.horizon:
                cont = np.zeros(I)
            elif depth + 1 >= policy.n or subplans.get(sp) is None:
                cont = np.full(I, boundary(t + 1, sp))
            else:
                cont = plan_vector(subplans[sp], sp, t + 1, depth + 1, boundary)
            vec += gamma * P[s, a, sp] * cont
        return vec

    if u.horizon is not None:
        memo: dict = {}

        def value(t, s):
            if t >= u.horizon or s in u.ref.terminals:
                return 0.0
            if (t, s) not in memo:
                memo[(t, s)] = float(np.max(plan_vector(policy.plan(t, s), s, t, 0, value)))
            return memo[(t, s)]

        return value(0, u.ref.initial_state)
    W = np.zeros(u.num_states)
    for _ in range(MAX_SWEEPS):
        W_new = np.array([
            0.0 if s in u.ref.terminals else float(np.max(plan_vector(policy.plan(0, s), s, 0, 0, lambda t, x: W[x])))
            for s in range(u.num_states)
        ])
        done = np.max(np.abs(W_new - W)) <= tol
        W = W_new
        if done:
            break
    return float(W[u.ref.initial_state])


# ---------------------------------------------------------------- evaluation

def evaluate_regret(u: SampleUncertainMdp, policy, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Per-sample regret ``V^pi_i(s0) - V*_i(s0)`` and its maximum."""
    regrets = np.zeros(len(u))
    for i, m in enumerate(u.samples):
        best = optimal_stage_values(m, tol)[0, m.initial_state]
        if isinstance(policy, OptionPolicy):
            mine = option_policy_evaluation(m, policy, tol)
        else:
            mine = policy_evaluation(m, policy, tol)[m.initial_state]
        regrets[i] = mine - best
    return regrets, float(regrets.max())


def _simplex_grid(k: int, parts: int):
    """All vectors of ``parts`` nonnegative integers summing to ``k``."""
    if parts == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _simplex_grid(k - first, parts - 1):
            yield (first,) + rest


def exact_minimax_regret(
    u: SampleUncertainMdp,
    policy_class: str = "deterministic",
    grid_step: float = 0.01,
    cap: int = DEFAULT_POLICY_CAP,
) -> tuple[float, Policy]:
    """Minimum over stationary policies of the maximum regret across samples.

    ``policy_class`` is ``"deterministic"`` (every action assignment) or
    ``"grid-stochastic"`` (action probabilities on multiples of
    ``grid_step``). Terminal states are fixed to action 0.
    """
    S, A = u.num_states, u.num_actions
    free = [s for s in range(S) if s not in u.ref.terminals]
    if policy_class == "deterministic":
        rows = [tuple(np.eye(A)[a]) for a in range(A)]
    elif policy_class == "grid-stochastic":
        k = int(round(1.0 / grid_step))
        if abs(k * grid_step - 1.0) > 1e-9:
            raise ValueError("grid_step must divide 1")
        rows = [tuple(np.array(v) / k) for v in _simplex_grid(k, A)]
    else:
        raise ValueError(f"unknown policy class {policy_class!r}")
    count = len(rows) ** len(free)
    if count > cap:
        raise PlanCapExceeded(count, cap, "policies")
    best_val, best_pol = np.inf, None
    optimal = [optimal_stage_values(m)[0, m.initial_state] for m in u.samples]
    for choice in product(rows, repeat=len(free)):
        probs = np.zeros((S, A))
        probs[:, 0] = 1.0
        for s, row in zip(free, choice):
            probs[s] = row
        pol = Policy(probs)
        worst = max(policy_evaluation(m, pol)[m.initial_state] - o for m, o in zip(u.samples, optimal))
        if worst < best_val - 1e-12:
            best_val, best_pol = worst, pol
    return float(best_val), best_pol

"""CVaR planning on known MDPs.

Static CVaR is solved as a two-player zero-sum game on a budget-augmented
state ``(s, y)``: the agent picks an action, then an adversary re-weights
the successor distribution by multipliers ``delta`` with
``0 <= delta <= 1/y`` and ``sum(P * delta) == 1``, passing budget
``y * delta(s')`` on to each successor. The continuation ``y * V(s, y)`` is
stored on a grid of budgets and interpolated linearly; with that
interpolation the adversary's inner problem is a fractional knapsack over
linear segments, solved exactly by greedy saturation.

Dynamic CVaR applies CVaR to the one-step cost-to-go mixture at every
stage. The lexicographic planner executes a CVaR-optimal policy and, as
soon as some continuation is guaranteed to stay within the base policy's
VaR, switches to the cheapest such continuation in expectation.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .distribution import CostDistribution, merge_atoms
from .mdp import Mdp, Policy
from .risk import cvar as cvar_of, cvar_of_arrays, saturate, var as var_of
from .solvers import greedy, worst_case_policy, worst_case_table

log = logging.getLogger(__name__)

BUDGET_TOL = 1e-9
GRID_TOL = 1e-12
MAX_SWEEPS = 100_000
# 21 points left interpolation gaps above 0.02 on some 3-state MDPs
DEFAULT_GRID_POINTS = 61


# --------------------------------------------------------------------- budget grid

@dataclass(frozen=True, eq=False)
class YGrid:
    """Strictly increasing budget points in (0, 1], always ending at 1."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid must be a non-empty 1-D sequence")
        if pts[0] <= 0 or abs(pts[-1] - 1.0) > GRID_TOL or np.any(np.diff(pts) <= 0):
            raise ValueError("grid must be strictly increasing in (0, 1] and end at 1")
        pts = pts.copy()
        pts[-1] = 1.0
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def default(cls, alpha: float, n: int = DEFAULT_GRID_POINTS, y_min: float = 1e-2) -> "YGrid":
        return cls.make(np.concatenate([np.geomspace(y_min, 1.0, n), [alpha]]))

    @classmethod
    def make(cls, points) -> "YGrid":
        pts = np.unique(np.append(np.asarray(points, dtype=float), 1.0))
        keep = np.concatenate([[True], np.diff(pts) > GRID_TOL])
        return cls(pts[keep])

    def __len__(self) -> int:
        return self.points.size

    def index(self, y: float) -> int | None:
        """Index of ``y`` on the grid, or ``None`` if it is off-grid."""
        k = int(np.argmin(np.abs(self.points - y)))
        return k if abs(self.points[k] - y) <= GRID_TOL else None

    @property
    def knots(self) -> np.ndarray:
        """Grid with a leading zero, where ``y * V`` vanishes."""
        return np.concatenate([[0.0], self.points])


# ------------------------------------------------------------------ adversary step

def adversary_best_response(values, probs, y: float) -> tuple[np.ndarray, float]:
    """Adversary's inner maximisation of ``sum(p * delta * v)`` for fixed values.

    Returns ``(delta, value)``. The feasible set is
    ``0 <= delta <= 1/y, sum(p * delta) = 1``.
    """
    if not 0.0 < y <= 1.0:
        raise ValueError(f"budget y must lie in (0, 1], got {y}")
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    delta = saturate(values, probs, y)
    return delta, float(np.sum(probs * delta * values))


def _segment_inner(costs, probs, g_next, knots, gamma, ys):
    """Adversary inner problem against interpolated continuations.

    ``g_next[i]`` holds ``y * V(s'_i, y)`` at ``knots``. Each successor
    contributes ``z * cost + gamma * g(z)``, piecewise linear in the budget
    share ``z = y * delta``; maximising the sum subject to
    ``sum(p * z) = y`` fills segments in order of decreasing slope.

    Returns the inner value (per unit budget) and ``delta`` for each ``y``.
    """
    lengths = np.diff(knots)
    slopes = costs[:, None] + gamma * np.diff(g_next, axis=1) / lengths[None, :]
    n_succ, n_seg = slopes.shape
    succ_idx = np.repeat(np.arange(n_succ), n_seg)
    seg_idx = np.tile(np.arange(n_seg), n_succ)
    flat_slopes = slopes.ravel()
    order = np.lexsort((seg_idx, succ_idx, -flat_slopes))
    resource = (probs[:, None] * lengths[None, :]).ravel()[order]
    start = np.concatenate([[0.0], np.cumsum(resource)[:-1]])
    ys = np.asarray(ys, dtype=float)
    fill = np.clip((ys[:, None] - start[None, :]) / resource[None, :], 0.0, 1.0)
    gain = fill @ (resource * flat_slopes[order])
    z = np.zeros((ys.size, n_succ))
    np.add.at(z.T, succ_idx[order], (fill * lengths[seg_idx[order]][None, :]).T)
    return gain / ys, z / ys[:, None]


# ------------------------------------------------------------------ static CVaR

@dataclass(eq=False)
class AugmentedPolicy:
    """Static-CVaR policy on budget-augmented states.

    ``actions[t, s, k]`` is the action at stage ``t``, state ``s`` and
    budget ``grid.points[k]``; ``deltas[t, s, k, a]`` is the adversary's
    response to action ``a`` there (multipliers over successor states).
    Stationary problems have a single stage. Budgets off the grid are
    handled by re-solving the one-step game against the interpolated
    continuation.
    """

    mdp: Mdp
    alpha: float
    grid: YGrid
    values: np.ndarray
    actions: np.ndarray
    deltas: np.ndarray
    _warned: bool = field(default=False, repr=False)
    _worst: Policy | None = field(default=None, repr=False)

    @property
    def n_stages(self) -> int:
        return self.values.shape[0]

    def value(self, s: int | None = None, y: float | None = None, t: int = 0) -> float:
        s = self.mdp.initial_state if s is None else s
        y = self.alpha if y is None else y
        k = self.grid.index(y)
        if k is not None:
            return float(self.values[self._stage(t), s, k])
        q, _ = self.lookahead(t, s, self._clamp(y))
        return float(q.min())

    def _stage(self, t: int) -> int:
        return min(t, self.n_stages - 1)

    def _continuation(self, t: int) -> np.ndarray:
        if self.mdp.horizon is None:
            return self.values[0]
        if t + 1 >= self.mdp.horizon:
            return np.zeros_like(self.values[0])
        return self.values[t + 1]

    def _clamp(self, y: float) -> float:
        lo = self.grid.points[0]
        if y < lo - GRID_TOL:
            if not self._warned:
                log.warning("budget %.3g below grid minimum %.3g; clamping", y, lo)
                self._warned = True
            return float(lo)
        return float(min(y, 1.0))

    def lookahead(self, t: int, s: int, y: float) -> tuple[np.ndarray, np.ndarray]:
        """Q-values and adversary responses at an arbitrary budget."""
        mdp = self.mdp
        g = np.concatenate([np.zeros((mdp.num_states, 1)), self._continuation(t) * self.grid.points], axis=1)
        q = np.empty(mdp.num_actions)
        deltas = np.zeros((mdp.num_actions, mdp.num_states))
        for a in range(mdp.num_actions):
            succ = np.flatnonzero(mdp.P[s, a] > 0)
            val, d = _segment_inner(mdp.C[s, a, succ], mdp.P[s, a, succ], g[succ], self.grid.knots,
                                    mdp.gamma, [y])
            q[a] = val[0]
            deltas[a, succ] = d[0]
        return q, deltas

    def act(self, t: int, s: int, y: float) -> tuple[int, np.ndarray]:
        """Action and adversary multipliers (over all states) at ``(t, s, y)``.

        A zero budget marks a branch the adversary has priced out; it carries
        no CVaR weight, so the worst-case action is taken there.
        """
        if y <= GRID_TOL and self.mdp.horizon is not None:
            if self._worst is None:
                self._worst = worst_case_policy(self.mdp)
            return int(self._worst.greedy_actions(t)[s]), np.zeros(self.mdp.num_states)
        y = self._clamp(y)
        k = self.grid.index(y)
        st = self._stage(t)
        if k is not None:
            a = int(self.actions[st, s, k])
            return a, self.deltas[st, s, k, a]
        q, deltas = self.lookahead(t, s, y)
        a = int(greedy(q))
        return a, deltas[a]


def _static_sweep(mdp: Mdp, grid: YGrid, v_next: np.ndarray):
    S, A, Y = mdp.num_states, mdp.num_actions, len(grid)
    knots = grid.knots
    g = np.concatenate([np.zeros((S, 1)), v_next * grid.points], axis=1)
    q = np.empty((S, Y, A))
    deltas = np.zeros((S, Y, A, S))
    for s in range(S):
        for a in range(A):
            succ = np.flatnonzero(mdp.P[s, a] > 0)
            val, d = _segment_inner(mdp.C[s, a, succ], mdp.P[s, a, succ], g[succ], knots, mdp.gamma, grid.points)
            q[s, :, a] = val
            deltas[s, :, a, succ] = d.T
    actions = greedy(q)
    return q.min(axis=2), actions, deltas


def solve_static_cvar(
    mdp: Mdp, alpha: float, grid: YGrid | None = None, tol: float = 1e-8
) -> tuple[np.ndarray, AugmentedPolicy]:
    """Budget-augmented value iteration for static CVaR.

    Returns the stage-0 table ``V[s, k]`` (budget ``grid.points[k]``) and
    the augmented policy. ``V[s0, index(alpha)]`` approximates the optimal
    CVaR of the total cost at level ``alpha``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    grid = YGrid.default(alpha) if grid is None else grid
    if grid.index(alpha) is None:
        raise ValueError(f"alpha={alpha} is not a grid point")
    S, Y = mdp.num_states, len(grid)
    if mdp.horizon is not None:
        H = mdp.horizon
        values = np.zeros((H, S, Y))
        actions = np.zeros((H, S, Y), dtype=int)
        deltas = np.zeros((H, S, Y, mdp.num_actions, S))
        v_next = np.zeros((S, Y))
        for t in reversed(range(H)):
            values[t], actions[t], deltas[t] = _static_sweep(mdp, grid, v_next)
            v_next = values[t]
    else:
        v = np.zeros((S, Y))
        for _ in range(MAX_SWEEPS):
            v_new, act, dl = _static_sweep(mdp, grid, v)
            done = np.max(np.abs(v_new - v)) <= tol
            v = v_new
            if done:
                break
        else:  # pragma: no cover
            raise RuntimeError("static CVaR iteration did not converge")
        values, actions, deltas = v[None], act[None], dl[None]
    policy = AugmentedPolicy(mdp, float(alpha), grid, values, actions, deltas)
    return values[0], policy


# ---------------------------------------------------------- forward enumeration

Chooser = Callable[[int, int, Hashable], tuple[int, Callable[[int, float], Hashable]]]


def enumerate_execution(mdp: Mdp, horizon: int, root: Hashable, choose: Chooser) -> CostDistribution:
    """Exact cost distribution of a controller with hashable internal state.

    ``choose(t, s, memo)`` returns the action and a function mapping
    ``(s', cost)`` to the successor's internal state.
    """
    frontier = {(mdp.initial_state, root): (np.zeros(1), np.ones(1))}
    for t in range(horizon):
        disc = mdp.gamma**t
        incoming = defaultdict(lambda: ([], []))
        for (s, memo), (vals, probs) in frontier.items():
            if s in mdp.terminals:
                incoming[(s, memo)][0].append(vals)
                incoming[(s, memo)][1].append(probs)
                continue
            a, nxt = choose(t, s, memo)
            for sp, p, c in mdp.successors(s, a):
                key = (sp, nxt(sp, c))
                incoming[key][0].append(vals + disc * c)
                incoming[key][1].append(probs * p)
        frontier = {k: merge_atoms(np.concatenate(v), np.concatenate(p)) for k, (v, p) in incoming.items()}
    vals = np.concatenate([v for v, _ in frontier.values()])
    probs = np.concatenate([p for _, p in frontier.values()])
    return CostDistribution.from_atoms(vals, probs / probs.sum())


def _key(x: float) -> float:
    return round(float(x), 12)


def augmented_return_distribution(policy: AugmentedPolicy, horizon: int | None = None) -> CostDistribution:
    """Exact distribution of total cost when executing ``policy`` from budget alpha."""
    mdp = policy.mdp
    horizon = mdp.horizon if horizon is None else horizon
    if horizon is None:
        raise ValueError("a finite horizon is needed to enumerate executions")

    def choose(t, s, y):
        a, delta = policy.act(t, s, y)
        return a, lambda sp, c: _key(y * delta[sp])

    return enumerate_execution(mdp, horizon, _key(policy.alpha), choose)


# ----------------------------------------------------------------- dynamic CVaR

def _dynamic_q(mdp: Mdp, v_next: np.ndarray, alpha: float) -> np.ndarray:
    S, A = mdp.num_states, mdp.num_actions
    q = np.empty((S, A))
    for s in range(S):
        for a in range(A):
            succ = np.flatnonzero(mdp.P[s, a] > 0)
            outcomes = mdp.C[s, a, succ] + mdp.gamma * v_next[succ]
            q[s, a] = cvar_of_arrays(outcomes, mdp.P[s, a, succ], alpha)
    return q


def solve_dynamic_cvar(mdp: Mdp, alpha: float, tol: float = 1e-10) -> tuple[np.ndarray, Policy]:
    """Nested (time-consistent) CVaR: CVaR of the one-step mixture at every stage."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    S, A = mdp.num_states, mdp.num_actions
    if mdp.horizon is not None:
        v = np.zeros(S)
        actions = np.zeros((mdp.horizon, S), dtype=int)
        for t in reversed(range(mdp.horizon)):
            q = _dynamic_q(mdp, v, alpha)
            actions[t] = greedy(q)
            v = q.min(axis=1)
        return v, Policy(np.eye(A)[actions])
    v = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        v_new = _dynamic_q(mdp, v, alpha).min(axis=1)
        done = mdp.gamma * np.max(np.abs(v_new - v)) <= tol
        v = v_new
        if done:
            break
    return v, Policy.deterministic(greedy(_dynamic_q(mdp, v, alpha)), A)


def dynamic_cvar_residual(mdp: Mdp, v: np.ndarray, alpha: float) -> float:
    return float(np.max(np.abs(_dynamic_q(mdp, v, alpha).min(axis=1) - v)))


def dynamic_cvar_evaluation(mdp: Mdp, policy: Policy, alpha: float, tol: float = 1e-10) -> np.ndarray:
    """Nested CVaR of a fixed policy; action randomness is part of the mixture."""
    S = mdp.num_states

    def backup(v_next, pi):
        out = np.empty(S)
        for s in range(S):
            acts, succs = np.nonzero(pi[s][:, None] * mdp.P[s] > 0)
            outcomes = mdp.C[s, acts, succs] + mdp.gamma * v_next[succs]
            out[s] = cvar_of_arrays(outcomes, pi[s, acts] * mdp.P[s, acts, succs], alpha)
        return out

    v = np.zeros(S)
    if mdp.horizon is not None:
        for t in reversed(range(mdp.horizon)):
            v = backup(v, policy.at(t))
        return v
    for _ in range(MAX_SWEEPS):
        v_new = backup(v, policy.at(0))
        done = mdp.gamma * np.max(np.abs(v_new - v)) <= tol
        v = v_new
        if done:
            break
    return v


# ----------------------------------------------------- budget-constrained EV

class InfeasibleBudget(ValueError):
    """No continuation is guaranteed to keep the total cost within the budget."""


class ConstrainedEV:
    """Expected-cost DP over (stage, state, remaining budget).

    Only actions whose every positive-probability continuation can still be
    kept within budget are allowed. Budgets are expressed in cost-from-now
    units: after paying ``c`` the remaining budget becomes ``(b - c) / gamma``.
    """

    def __init__(self, mdp: Mdp):
        if mdp.horizon is None:
            raise ValueError("constrained expected-value DP needs a finite horizon")
        self.mdp = mdp
        self.worst = worst_case_table(mdp)
        self._memo: dict = {}

    def feasible(self, t: int, s: int, b: float) -> bool:
        if t >= self.mdp.horizon:
            return b >= -BUDGET_TOL
        return self.worst[t, s] <= b + BUDGET_TOL

    def solve(self, t: int, s: int, b: float) -> tuple[float, int] | None:
        """``(expected cost, action)`` or ``None`` when infeasible."""
        mdp = self.mdp
        key = (t, s, round(b, 9))
        if key in self._memo:
            return self._memo[key]
        if not self.feasible(t, s, b):
            result = None
        elif t >= mdp.horizon or s in mdp.terminals:
            result = (0.0, 0)
        else:
            q = np.full(mdp.num_actions, np.inf)
            for a in range(mdp.num_actions):
                total = 0.0
                for sp, p, c in mdp.successors(s, a):
                    sub = self.solve(t + 1, sp, (b - c) / mdp.gamma)
                    if sub is None:
                        break
                    total += p * (c + mdp.gamma * sub[0])
                else:
                    q[a] = total
            result = (float(q.min()), int(greedy(q))) if np.isfinite(q).any() else None
        self._memo[key] = result
        return result

    def fragment(self, t: int, s: int, b: float) -> dict:
        """Actions at every ``(t, s, budget)`` reachable under the constrained policy."""
        out = {}
        stack = [(t, s, b)]
        while stack:
            tt, ss, bb = stack.pop()
            key = (tt, ss, round(bb, 9))
            if key in out or tt >= self.mdp.horizon or ss in self.mdp.terminals:
                continue
            _, a = self.solve(tt, ss, bb)
            out[key] = a
            for sp, _, c in self.mdp.successors(ss, a):
                stack.append((tt + 1, sp, (bb - c) / self.mdp.gamma))
        return out


def constrained_ev_dp(mdp: Mdp, start: int | None = None, budget: float = 0.0, t0: int = 0) -> tuple[float, dict]:
    """Minimum expected cost among continuations whose worst case is within ``budget``.

    Returns the expected cost and a policy fragment mapping
    ``(stage, state, rounded budget)`` to an action.
    """
    s = mdp.initial_state if start is None else start
    solver = ConstrainedEV(mdp)
    result = solver.solve(t0, s, budget)
    if result is None:
        raise InfeasibleBudget(
            f"no policy from state {s} keeps the cost within {budget} (worst case {solver.worst[t0, s]})"
        )
    return result[0], solver.fragment(t0, s, budget)


# -------------------------------------------------------------- lexicographic

@dataclass(eq=False)
class LexPolicy:
    """CVaR-optimal base policy plus switches to a budget-safe expected-cost policy.

    ``switch_table`` maps ``(t, s, budget)`` to the first action taken when
    switching there; ``constrained_actions`` covers the rest of every
    switched continuation. Budgets are rounded to 9 decimals.
    """

    base: AugmentedPolicy
    var_star: float
    switch_table: dict
    constrained_actions: dict

    @property
    def mdp(self) -> Mdp:
        return self.base.mdp


def _lex_enumerate(lex_base: AugmentedPolicy, var_star: float, horizon: int, decide) -> CostDistribution:
    mdp = lex_base.mdp

    def choose(t, s, memo):
        mode, y, acc, b = memo
        if mode == "base":
            budget = (var_star - acc) / mdp.gamma**t
            a = decide(t, s, budget, switched=False)
            if a is not None:
                return a, lambda sp, c: ("ev", 0.0, _key(acc + mdp.gamma**t * c), round((budget - c) / mdp.gamma, 9))
            a, delta = lex_base.act(t, s, y)
            return a, lambda sp, c: ("base", _key(y * delta[sp]), _key(acc + mdp.gamma**t * c), 0.0)
        a = decide(t, s, b, switched=True)
        return a, lambda sp, c: ("ev", 0.0, _key(acc + mdp.gamma**t * c), round((b - c) / mdp.gamma, 9))

    return enumerate_execution(mdp, horizon, ("base", _key(lex_base.alpha), 0.0, 0.0), choose)


def solve_lexicographic(
    mdp: Mdp, alpha: float, grid: YGrid | None = None, tol: float = 1e-8
) -> LexPolicy:
    """Best expected cost subject to keeping the static-CVaR-optimal value.

    The base policy runs until a stage where some continuation is certain
    not to push the total cost above the base policy's VaR; from there the
    cheapest such continuation (in expectation) is followed.
    """
    if mdp.horizon is None:
        raise ValueError("lexicographic refinement needs a finite horizon")
    _, base = solve_static_cvar(mdp, alpha, grid, tol)
    var_star = var_of(augmented_return_distribution(base), alpha)
    solver = ConstrainedEV(mdp)
    switch_table: dict = {}
    constrained: dict = {}

    def decide(t, s, b, switched):
        key = (t, s, round(b, 9))
        if switched:
            a = solver.solve(t, s, b)[1]
            constrained[key] = a
            return a
        result = solver.solve(t, s, b)
        if result is None:
            return None
        switch_table[key] = result[1]
        return result[1]

    _lex_enumerate(base, var_star, mdp.horizon, decide)
    return LexPolicy(base, float(var_star), switch_table, constrained)


def lex_return_distribution(lex: LexPolicy) -> CostDistribution:
    """Exact cost distribution of executing a :class:`LexPolicy`."""

    def decide(t, s, b, switched):
        key = (t, s, round(b, 9))
        if switched:
            return lex.constrained_actions[key]
        return lex.switch_table.get(key)

    return _lex_enumerate(lex.base, lex.var_star, lex.mdp.horizon, decide)


def static_cvar_of_policy(policy: AugmentedPolicy, horizon: int | None = None) -> float:
    return cvar_of(augmented_return_distribution(policy, horizon), policy.alpha)

"""Bayes-adaptive MDPs with Dirichlet beliefs over transition rows.

Costs are known; only transition probabilities are uncertain. The belief
is a table of Dirichlet pseudo-counts ``counts[s, a, s']``; zero entries mark
successors outside the support of that row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import InvalidMdpError, Mdp, _parse_rows, _shared_fields
from .oracles import DEFAULT_POLICY_CAP, DistributionEnumerator, OracleResult, min_cvar


@dataclass(frozen=True, eq=False)
class DirichletBelief:
    counts: np.ndarray
    known_cost: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        cost = np.array(self.known_cost, dtype=float)
        if counts.ndim != 3 or counts.shape[0] != counts.shape[2] or cost.shape != counts.shape:
            raise InvalidMdpError("counts and known_cost must both have shape (S, A, S)")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise InvalidMdpError("pseudo-counts must be finite and nonnegative")
        empty = np.argwhere(counts.sum(axis=2) <= 0)
        if len(empty):
            s, a = empty[0]
            raise InvalidMdpError(f"belief row (s={s}, a={a}) has no successor with positive count")
        counts.setflags(write=False)
        cost.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "known_cost", cost)

    @property
    def num_states(self) -> int:
        return self.counts.shape[0]

    @property
    def num_actions(self) -> int:
        return self.counts.shape[1]

    def key(self) -> bytes:
        return self.counts.tobytes()

    def support(self, s: int, a: int) -> np.ndarray:
        return np.flatnonzero(self.counts[s, a] > 0)


def predictive_transition(belief: DirichletBelief, s: int, a: int) -> np.ndarray:
    """Posterior-mean successor distribution of ``(s, a)``, shape (S,)."""
    if not (0 <= s < belief.num_states and 0 <= a < belief.num_actions):
        raise IndexError(f"(s={s}, a={a}) is not covered by the belief")
    row = belief.counts[s, a]
    return row / row.sum()


def belief_update(belief: DirichletBelief, s: int, a: int, sp: int) -> DirichletBelief:
    """Posterior after observing ``s --a--> sp``."""
    counts = belief.counts.copy()
    counts[s, a, sp] += 1.0
    return DirichletBelief(counts, belief.known_cost)


@dataclass(frozen=True, eq=False)
class BamdpProblem:
    prior: DirichletBelief
    gamma: float = 1.0
    horizon: int = 1
    initial_state: int = 0
    terminals: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "terminals", frozenset(int(t) for t in self.terminals))
        if not 0 < self.gamma <= 1:
            raise InvalidMdpError("gamma must lie in (0, 1]")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidMdpError("horizon must be a positive integer")
        for t in self.terminals:
            row = self.prior.counts[t]
            off = row.copy()
            off[:, t] = 0
            if np.any(off > 0) or np.any(self.prior.known_cost[t, :, t] != 0):
                raise InvalidMdpError(f"terminal state {t} must self-loop with zero cost")

    @classmethod
    def from_mdp(cls, mdp: Mdp, concentration: float = 1e9, horizon: int | None = None) -> "BamdpProblem":
        """A nearly-known BAMDP whose predictive dynamics equal ``mdp``'s."""
        horizon = mdp.horizon if horizon is None else horizon
        if horizon is None:
            raise ValueError("a finite horizon is required")
        belief = DirichletBelief(mdp.P * concentration, mdp.C)
        return cls(belief, mdp.gamma, horizon, mdp.initial_state, mdp.terminals)

    def initial_belief_state(self, alpha: float = 1.0) -> "BeliefState":
        return BeliefState(self.initial_state, self.prior, alpha, 0)



def bamdp_from_dict(doc) -> BamdpProblem:
    """Parse the MDP header plus a ``prior`` block of ``{"sp", "count", "cost"}`` entries.

    Terminal rows may be omitted (a unit self-loop count is filled in).
    """
    shared = _shared_fields(doc)
    S, A = shared.pop("num_states"), shared.pop("num_actions")
    if shared["horizon"] is None:
        raise InvalidMdpError("a BAMDP needs a finite horizon")
    rows = _parse_rows(S, A, doc.get("prior", []), block="prior", weight="count")
    counts = np.zeros((S, A, S))
    cost = np.zeros_like(counts)
    for s in range(S):
        for a in range(A):
            if (s, a) in rows:
                for sp, n, c in rows[(s, a)]:
                    counts[s, a, sp], cost[s, a, sp] = n, c
            elif s in shared["terminals"]:
                counts[s, a, s] = 1.0
            else:
                raise InvalidMdpError(f"missing prior row for (s={s}, a={a})")
    return BamdpProblem(DirichletBelief(counts, cost), shared["gamma"], shared["horizon"],
                        shared["initial_state"], shared["terminals"])


def bamdp_to_dict(problem: BamdpProblem) -> dict:
    counts, cost = problem.prior.counts, problem.prior.known_cost
    prior = []
    for s in range(problem.prior.num_states):
        for a in range(problem.prior.num_actions):
            nxt = [{"sp": int(sp), "count": float(counts[s, a, sp]), "cost": float(cost[s, a, sp])}
                   for sp in np.flatnonzero(counts[s, a])]
            prior.append({"s": s, "a": a, "next": nxt})
    return {
        "num_states": problem.prior.num_states,
        "num_actions": problem.prior.num_actions,
        "gamma": problem.gamma,
        "horizon": problem.horizon,
        "initial_state": problem.initial_state,
        "terminals": sorted(problem.terminals),
        "prior": prior,
    }

@dataclass(frozen=True, eq=False)
class BeliefState:
    """Search state: environment state, belief, remaining risk budget, depth."""

    env_state: int
    belief: DirichletBelief
    y: float
    depth: int = 0

    def __post_init__(self):
        if not 0.0 < self.y <= 1.0 + 1e-12:
            raise ValueError(f"risk budget y must lie in (0, 1], got {self.y}")


def root_sample(belief: DirichletBelief, seed, terminals=(), gamma: float = 1.0,
                horizon: int | None = 1, initial_state: int = 0) -> Mdp:
    """Draw one MDP from the belief (each row from its own Dirichlet)."""
    rng = np.random.default_rng(seed)
    S, A = belief.num_states, belief.num_actions
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            supp = belief.support(s, a)
            if supp.size == 1:
                P[s, a, supp[0]] = 1.0
            else:
                P[s, a, supp] = rng.dirichlet(belief.counts[s, a, supp])
    cost = np.where(P > 0, belief.known_cost, 0.0)
    return Mdp(P, cost, gamma=gamma, horizon=horizon, initial_state=initial_state, terminals=terminals)


def exact_bamdp_cvar(
    problem: BamdpProblem,
    alpha: float,
    horizon: int | None = None,
    initial: BeliefState | None = None,
    cap: int = DEFAULT_POLICY_CAP,
) -> OracleResult:
    """Optimal static CVaR over all deterministic history-dependent policies.

    Each branch of the history tree carries its own posterior, so the
    predictive dynamics are exact for the BAMDP. ``tied_actions`` lists
    every first action that attains the optimum.
    """
    horizon = problem.horizon if horizon is None else horizon
    start = initial if initial is not None else problem.initial_belief_state(alpha)
    beliefs: dict[bytes, DirichletBelief] = {start.belief.key(): start.belief}
    A = start.belief.num_actions

    def expand(node):
        t, s, bkey = node
        if t >= horizon or s in problem.terminals:
            return None
        belief = beliefs[bkey]
        branches = []
        for a in range(A):
            q = predictive_transition(belief, s, a)
            succ = []
            for sp in belief.support(s, a):
                child = belief_update(belief, s, a, int(sp))
                ckey = child.key()
                beliefs.setdefault(ckey, child)
                succ.append((float(q[sp]), float(belief.known_cost[s, a, sp]), (t + 1, int(sp), ckey)))
            branches.append(succ)
        return branches

    enum = DistributionEnumerator(expand, problem.gamma, cap)
    return min_cvar(enum((start.depth, start.env_state, start.belief.key())), alpha)

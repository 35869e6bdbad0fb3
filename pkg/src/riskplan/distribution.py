"""Finite discrete cost distributions and the exact return-distribution oracle."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Policy, check_policy

MERGE_TOL = 1e-12
DEFAULT_ATOM_CAP = 10**6


class AtomCapExceeded(RuntimeError):
    """The exact distribution would need more atoms than the configured cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"return distribution needs {count} atoms, cap is {cap}")
        self.count = count
        self.cap = cap


def merge_atoms(values, probs, tol: float = MERGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Sort atoms, drop zero mass and merge values closer than ``tol``."""
    values = np.asarray(values, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    keep = probs > 0
    values, probs = values[keep], probs[keep]
    if values.size == 0:
        return values, probs
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    new_group = np.empty(values.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(values) > tol
    starts = np.flatnonzero(new_group)
    return values[starts], np.add.reduceat(probs, starts)


@dataclass(frozen=True, eq=False)
class CostDistribution:
    """A discrete distribution over cumulative cost.

    Atoms are kept sorted with strictly increasing values. Build instances
    with :meth:`from_atoms`, which normalises arbitrary input.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        probs = np.array(self.probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and probs must be non-empty 1-D arrays of equal length")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must be positive and sum to 1 (sum={probs.sum()!r})")
        if np.any(np.diff(values) <= 0):
            raise ValueError("atom values must be strictly increasing")
        values.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, values, probs) -> "CostDistribution":
        v, p = merge_atoms(values, probs)
        return cls(v, p)

    @classmethod
    def point(cls, value: float) -> "CostDistribution":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def from_dict(cls, atoms: dict) -> "CostDistribution":
        return cls.from_atoms(list(atoms.keys()), list(atoms.values()))

    def __len__(self) -> int:
        return self.values.size

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def variance(self) -> float:
        return float(((self.values - self.mean) ** 2) @ self.probs)

    @property
    def max(self) -> float:
        return float(self.values[-1])

    @property
    def min(self) -> float:
        return float(self.values[0])

    def shift(self, c: float) -> "CostDistribution":
        return CostDistribution(self.values + c, self.probs)

    def scale(self, beta: float) -> "CostDistribution":
        return CostDistribution.from_atoms(self.values * beta, self.probs)

    def __repr__(self) -> str:
        inner = ", ".join(f"{v:g}: {p:g}" for v, p in self.atoms())
        return f"CostDistribution({{{inner}}})"


def return_distribution(
    mdp: Mdp,
    policy: Policy,
    horizon: int | None = None,
    *,
    start: int | None = None,
    cap: int = DEFAULT_ATOM_CAP,
) -> CostDistribution:
    """Exact distribution of the discounted cumulative cost over ``horizon`` steps.

    Forward distributional DP: the atoms carried for each state are merged at
    every step, so the work is bounded by the number of distinct reachable
    (state, cost) pairs rather than the number of trajectories.
    """
    check_policy(mdp, policy)
    horizon = mdp.horizon if horizon is None else horizon
    if horizon is None or horizon < 1:
        raise ValueError("a positive integer horizon is required")
    s0 = mdp.initial_state if start is None else start
    frontier = {s0: (np.zeros(1), np.ones(1))}
    for t in range(horizon):
        disc = mdp.gamma**t
        pi = policy.at(t)
        incoming: dict[int, tuple[list, list]] = defaultdict(lambda: ([], []))
        for s, (vals, probs) in frontier.items():
            if s in mdp.terminals:
                incoming[s][0].append(vals)
                incoming[s][1].append(probs)
                continue
            for a in np.flatnonzero(pi[s] > 0):
                for sp, p, c in mdp.successors(s, a):
                    incoming[sp][0].append(vals + disc * c)
                    incoming[sp][1].append(probs * (pi[s, a] * p))
        frontier = {}
        total = 0
        for sp in sorted(incoming):
            vs, ps = incoming[sp]
            frontier[sp] = merge_atoms(np.concatenate(vs), np.concatenate(ps))
            total += frontier[sp][0].size
        if total > cap:
            raise AtomCapExceeded(total, cap)
    vals = np.concatenate([v for v, _ in frontier.values()])
    probs = np.concatenate([p for _, p in frontier.values()])
    return CostDistribution.from_atoms(vals, probs / probs.sum())

"""Brute-force oracles over deterministic history-dependent policies.

A history-dependent policy picks an action at every node of the history
tree. Because the dynamics below a node depend only on its (hashable) state,
the set of cost distributions achievable from a node can be built bottom-up:
for each action, take every combination of one achievable distribution per
successor. That is the same set as enumerating the policies one by one,
with identical rows deduplicated along the way.

Distributions at a node are stored as rows of a matrix over a shared sorted
support of future costs.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Hashable, Sequence

import numpy as np

from .mdp import Mdp
from .risk import cvar_rows

DEFAULT_POLICY_CAP = 10**5
ROUND = 12

# expand(node) -> None for a leaf, otherwise one list per action of
# (probability, cost, child node) triples
Expand = Callable[[Hashable], Sequence[Sequence[tuple[float, float, Hashable]]] | None]


class OracleCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"oracle would enumerate {count} policies, cap is {cap}")
        self.count = count
        self.cap = cap


@dataclass
class DistributionSet:
    support: np.ndarray
    rows: np.ndarray
    first_action: np.ndarray
    policy_count: int


class DistributionEnumerator:
    def __init__(self, expand: Expand, gamma: float, cap: int = DEFAULT_POLICY_CAP):
        self.expand = expand
        self.gamma = gamma
        self.cap = cap
        self._memo: dict = {}
        self._counts: dict = {}

    def count(self, node) -> int:
        """Number of deterministic policies below ``node`` (no deduplication)."""
        if node in self._counts:
            return self._counts[node]
        branches = self.expand(node)
        if branches is None:
            n = 1
        else:
            n = 0
            for succ in branches:
                prod = 1
                for _, _, child in succ:
                    prod *= self.count(child)
                    if prod > self.cap:
                        break
                n += prod
                if n > self.cap:
                    break
        self._counts[node] = n
        return n

    def __call__(self, node) -> DistributionSet:
        total = self.count(node)
        if total > self.cap:
            raise OracleCapExceeded(total, self.cap)
        return self._build(node)

    def _build(self, node) -> DistributionSet:
        if node in self._memo:
            return self._memo[node]
        branches = self.expand(node)
        if branches is None:
            out = DistributionSet(np.zeros(1), np.ones((1, 1)), np.zeros(1, dtype=int), 1)
            self._memo[node] = out
            return out
        per_action = []
        for a, succ in enumerate(branches):
            children = [(p, c, self._build(child)) for p, c, child in succ if p > 0]
            shifted = [np.round(c + self.gamma * ch.support, ROUND) for _, c, ch in children]
            support = np.unique(np.concatenate(shifted))
            width = support.size
            acc = np.zeros((1, width))
            for (p, _, ch), vals in zip(children, shifted):
                idx = np.searchsorted(support, vals)
                emb = np.zeros((ch.rows.shape[0], width))
                np.add.at(emb.T, idx, ch.rows.T)
                acc = (acc[:, None, :] + p * emb[None, :, :]).reshape(-1, width)
                acc = _dedupe(acc)
            per_action.append((support, acc, a))
        support = np.unique(np.concatenate([sp for sp, _, _ in per_action]))
        rows, labels = [], []
        for sp, acc, a in per_action:
            emb = np.zeros((acc.shape[0], support.size))
            emb[:, np.searchsorted(support, sp)] = acc
            rows.append(emb)
            labels.append(np.full(acc.shape[0], a))
        rows = np.concatenate(rows)
        labels = np.concatenate(labels)
        _, first = np.unique(np.round(rows, ROUND), axis=0, return_index=True)
        first.sort()
        out = DistributionSet(support, rows[first], labels[first], self.count(node))
        self._memo[node] = out
        return out


def _dedupe(rows: np.ndarray) -> np.ndarray:
    _, first = np.unique(np.round(rows, ROUND), axis=0, return_index=True)
    return rows[np.sort(first)]


@dataclass
class OracleResult:
    value: float
    action: int
    tied_actions: tuple[int, ...]
    policy_count: int


def min_cvar(dset: DistributionSet, alpha: float, tie_tol: float = 1e-9) -> OracleResult:
    scores = cvar_rows(dset.support, dset.rows, alpha)
    best = float(scores.min())
    tied = tuple(sorted(set(dset.first_action[scores <= best + tie_tol].tolist())))
    return OracleResult(best, tied[0], tied, dset.policy_count)


def mdp_expander(mdp: Mdp, horizon: int) -> Expand:
    def expand(node):
        t, s = node
        if t >= horizon or s in mdp.terminals:
            return None
        return [[(p, c, (t + 1, sp)) for sp, p, c in mdp.successors(s, a)] for a in range(mdp.num_actions)]

    return expand


def exhaustive_static_cvar(
    mdp: Mdp, alpha: float, horizon: int | None = None, cap: int = DEFAULT_POLICY_CAP
) -> OracleResult:
    """Optimal static CVaR over all deterministic history-dependent policies."""
    horizon = mdp.horizon if horizon is None else horizon
    if horizon is None:
        raise ValueError("the enumeration oracle needs a finite horizon")
    enum = DistributionEnumerator(mdp_expander(mdp, horizon), mdp.gamma, cap)
    return min_cvar(enum((0, mdp.initial_state)), alpha)


def min_mean_at_cvar(dset: DistributionSet, alpha: float, slack: float = 1e-9) -> OracleResult:
    """Lowest expected cost among distributions whose CVaR is within ``slack`` of optimal."""
    scores = cvar_rows(dset.support, dset.rows, alpha)
    ok = scores <= scores.min() + slack
    means = dset.rows[ok] @ dset.support
    best = float(means.min())
    tied = tuple(sorted(set(dset.first_action[ok][means <= best + slack].tolist())))
    return OracleResult(best, tied[0], tied, dset.policy_count)


def exhaustive_lexicographic(
    mdp: Mdp, alpha: float, horizon: int | None = None, cap: int = DEFAULT_POLICY_CAP
) -> OracleResult:
    """Best expected cost among history-dependent policies with optimal static CVaR."""
    horizon = mdp.horizon if horizon is None else horizon
    if horizon is None:
        raise ValueError("the enumeration oracle needs a finite horizon")
    enum = DistributionEnumerator(mdp_expander(mdp, horizon), mdp.gamma, cap)
    return min_mean_at_cvar(enum((0, mdp.initial_state)), alpha)


def markov_policies(num_states: int, num_actions: int, stages: int, fixed=(), cap: int = DEFAULT_POLICY_CAP):
    """Every deterministic stage-dependent policy table, shape ``(stages, S, A)``.

    States in ``fixed`` always take action 0.
    """
    free = [s for s in range(num_states) if s not in set(fixed)]
    count = num_actions ** (len(free) * stages)
    if count > cap:
        raise OracleCapExceeded(count, cap)
    eye = np.eye(num_actions)
    for choice in product(range(num_actions), repeat=len(free) * stages):
        probs = np.zeros((stages, num_states, num_actions))
        probs[:, :, 0] = 1.0
        for k, a in enumerate(choice):
            probs[k // len(free), free[k % len(free)]] = eye[a]
        yield probs

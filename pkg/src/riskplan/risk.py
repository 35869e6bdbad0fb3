"""Risk measures on :class:`CostDistribution` values.

All measures use the cost convention: a larger score is riskier. CVaR at
level ``alpha`` is the mean of the worst ``alpha`` probability mass, with
the boundary atom split fractionally, so ``cvar(d, 1) == d.mean``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import CostDistribution

TAIL_TOL = 1e-12


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def _tail_sums(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strict upper-tail mass and first moment above each atom (sorted input)."""
    mass = np.concatenate([np.cumsum(probs[::-1])[::-1][1:], [0.0]])
    moment = np.concatenate([np.cumsum((probs * values)[::-1])[::-1][1:], [0.0]])
    return mass, moment


def cvar(dist: CostDistribution, alpha: float) -> float:
    """Conditional value at risk via ``min_w { w + E[(Z - w)^+] / alpha }``.

    The objective is piecewise linear in ``w`` with kinks at the atoms, so
    scanning the atoms finds the exact minimum.

    >>> cvar(CostDistribution.from_dict({0: .25, 2: .5, 4: .25}), 0.5)
    3.0
    """
    alpha = _check_alpha(alpha)
    z, p = dist.values, dist.probs
    mass, moment = _tail_sums(z, p)
    objective = z + (moment - z * mass) / alpha
    return float(objective.min())


def var(dist: CostDistribution, alpha: float) -> float:
    """Value at risk: the smallest atom ``z`` with ``P(Z > z) <= alpha``."""
    alpha = _check_alpha(alpha)
    mass, _ = _tail_sums(dist.values, dist.probs)
    k = int(np.argmax(mass <= alpha + TAIL_TOL))
    return float(dist.values[k])


def mean_variance(dist: CostDistribution, lam: float) -> float:
    """Mean plus ``lam`` times variance."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return dist.mean + lam * dist.variance


def expectation(dist: CostDistribution) -> float:
    return dist.mean


@dataclass(frozen=True)
class DualWeights:
    """Adversarial density ``delta`` aligned with a distribution's atoms.

    Feasible weights satisfy ``0 <= delta <= 1/alpha`` and
    ``sum(p * delta) == 1``.
    """

    delta: np.ndarray
    alpha: float

    def reweighted_mean(self, dist: CostDistribution) -> float:
        return float(np.sum(dist.probs * self.delta * dist.values))

    def is_feasible(self, dist: CostDistribution, tol: float = 1e-9) -> bool:
        d = self.delta
        return bool(
            np.all(d >= -tol)
            and np.all(d <= 1.0 / self.alpha + tol)
            and abs(np.sum(dist.probs * d) - 1.0) <= tol
        )


def saturate(values, probs, budget: float) -> np.ndarray:
    """Greedy fractional saturation of the largest values.

    Returns multipliers ``delta`` with ``0 <= delta <= 1/budget`` and
    ``sum(p * delta) == 1`` that maximise ``sum(p * delta * values)``. Ties
    in value are filled in index order. Zero-probability entries get 0.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.lexsort((np.arange(values.size), -values))
    delta = np.zeros(values.size)
    remaining = float(budget)
    for i in order:
        if probs[i] <= 0:
            continue
        take = min(probs[i], remaining)
        delta[i] = take / (budget * probs[i])
        remaining -= take
        if remaining <= 0:
            break
    if remaining > 1e-12:
        # rounding left a sliver; hand it to the unsaturated entries
        delta[probs > 0] /= np.sum(probs * delta)
    return delta


def cvar_dual_weights(dist: CostDistribution, alpha: float) -> DualWeights:
    """The adversarial re-weighting whose expectation equals the CVaR."""
    alpha = _check_alpha(alpha)
    return DualWeights(saturate(dist.values, dist.probs, alpha), alpha)


@dataclass(frozen=True)
class RiskSpec:
    """Which risk measure to apply; ``alpha`` for var/cvar, ``lam`` for mean-variance."""

    kind: str = "expectation"
    alpha: float | None = None
    lam: float = 0.0

    KINDS = ("expectation", "var", "cvar", "mean_variance")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown risk measure {self.kind!r}")
        needs_alpha = self.kind in ("var", "cvar")
        if needs_alpha != (self.alpha is not None):
            raise ValueError(f"alpha is {'required' if needs_alpha else 'not accepted'} for {self.kind}")
        if needs_alpha:
            _check_alpha(self.alpha)
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    def __call__(self, dist: CostDistribution) -> float:
        if self.kind == "cvar":
            return cvar(dist, self.alpha)
        if self.kind == "var":
            return var(dist, self.alpha)
        if self.kind == "mean_variance":
            return mean_variance(dist, self.lam)
        return dist.mean


def cvar_of_arrays(values, probs, alpha: float) -> float:
    """CVaR of unsorted, possibly repeated atoms (small inputs)."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    excess = np.maximum(values[None, :] - values[:, None], 0.0) @ probs
    return float(np.min(values + excess / alpha))


def cvar_rows(support: np.ndarray, mat: np.ndarray, alpha: float) -> np.ndarray:
    """CVaR of many distributions sharing one sorted support (one per row)."""
    mass = np.cumsum(mat[:, ::-1], axis=1)[:, ::-1]
    moment = np.cumsum((mat * support)[:, ::-1], axis=1)[:, ::-1]
    mass = np.concatenate([mass[:, 1:], np.zeros((mat.shape[0], 1))], axis=1)
    moment = np.concatenate([moment[:, 1:], np.zeros((mat.shape[0], 1))], axis=1)
    objective = support + (moment - support * mass) / alpha
    return objective.min(axis=1)

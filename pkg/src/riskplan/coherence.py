"""Randomised checks of the coherence axioms for risk measures.

Random variables are drawn on a shared finite outcome space so that
pointwise dominance and sums are well defined; each is converted to a
:class:`CostDistribution` before the measure is applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distribution import CostDistribution

DEFAULT_SEED = 20240611
Measure = Callable[[CostDistribution], float]


@dataclass
class AxiomReport:
    axiom: str
    trials: int
    seed: int
    worst_violation: float = 0.0
    witness: dict | None = field(default=None, repr=False)

    def passed(self, tol: float) -> bool:
        return self.worst_violation <= tol


def random_outcome_space(rng: np.random.Generator, max_atoms: int = 8) -> np.ndarray:
    n = int(rng.integers(1, max_atoms + 1))
    return rng.dirichlet(np.ones(n))


def random_costs(rng: np.random.Generator, n: int, low: float = -10.0, high: float = 10.0) -> np.ndarray:
    z = rng.uniform(low, high, n)
    # occasional ties exercise the atom-merging path
    if n > 1 and rng.random() < 0.3:
        z[rng.integers(n)] = z[rng.integers(n)]
    return z


def dist_of(z: np.ndarray, q: np.ndarray) -> CostDistribution:
    return CostDistribution.from_atoms(z, q)


def _run(axiom: str, measure: Measure, trials: int, seed: int, draw) -> AxiomReport:
    rng = np.random.default_rng(seed)
    report = AxiomReport(axiom, trials, seed)
    for _ in range(trials):
        gap, info = draw(rng, measure)
        if gap > report.worst_violation:
            report.worst_violation = gap
            report.witness = info
    return report


def check_monotonicity(measure: Measure, trials: int = 1000, seed: int = DEFAULT_SEED) -> AxiomReport:
    def draw(rng, rho):
        q = random_outcome_space(rng)
        z1 = random_costs(rng, q.size)
        z2 = z1 + rng.uniform(0, 5, q.size) * (rng.random(q.size) < 0.7)
        r1, r2 = rho(dist_of(z1, q)), rho(dist_of(z2, q))
        return r1 - r2, dict(q=q, z1=z1, z2=z2, rho1=r1, rho2=r2)

    return _run("monotonicity", measure, trials, seed, draw)


def check_translation_invariance(measure: Measure, trials: int = 1000, seed: int = DEFAULT_SEED) -> AxiomReport:
    def draw(rng, rho):
        q = random_outcome_space(rng)
        z = random_costs(rng, q.size)
        c = float(rng.uniform(-10, 10))
        lhs, rhs = rho(dist_of(z - c, q)), rho(dist_of(z, q)) - c
        return abs(lhs - rhs), dict(q=q, z=z, c=c)

    return _run("translation invariance", measure, trials, seed, draw)


def check_positive_homogeneity(measure: Measure, trials: int = 1000, seed: int = DEFAULT_SEED) -> AxiomReport:
    def draw(rng, rho):
        q = random_outcome_space(rng)
        z = random_costs(rng, q.size)
        beta = float(rng.choice([0.0, rng.uniform(0, 5)]))
        lhs, rhs = rho(dist_of(beta * z, q)), beta * rho(dist_of(z, q))
        return abs(lhs - rhs), dict(q=q, z=z, beta=beta)

    return _run("positive homogeneity", measure, trials, seed, draw)


def check_subadditivity(measure: Measure, trials: int = 1000, seed: int = DEFAULT_SEED) -> AxiomReport:
    def draw(rng, rho):
        # a random joint table; Z1 indexes rows and Z2 columns
        n1, n2 = rng.integers(1, 4, size=2)
        joint = rng.dirichlet(np.ones(n1 * n2)).reshape(n1, n2)
        a, b = random_costs(rng, n1), random_costs(rng, n2)
        q = joint.ravel()
        z1 = np.repeat(a, n2)
        z2 = np.tile(b, n1)
        lhs = rho(dist_of(z1 + z2, q))
        rhs = rho(dist_of(z1, q)) + rho(dist_of(z2, q))
        return lhs - rhs, dict(joint=joint, a=a, b=b)

    return _run("subadditivity", measure, trials, seed, draw)


AXIOM_CHECKS = {
    "monotonicity": check_monotonicity,
    "translation invariance": check_translation_invariance,
    "positive homogeneity": check_positive_homogeneity,
    "subadditivity": check_subadditivity,
}


def find_monotonicity_witness(
    measure: Measure, trials: int = 10_000, seed: int = DEFAULT_SEED, tol: float = 1e-9
) -> dict | None:
    """Search for ``Z1 <= Z2`` pointwise with ``measure(Z1) > measure(Z2)``.

    Returns the first witness found, or ``None``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        q = random_outcome_space(rng, 4)
        z1 = random_costs(rng, q.size)
        z2 = z1 + rng.uniform(0, 10, q.size) * (rng.random(q.size) < 0.5)
        r1, r2 = measure(dist_of(z1, q)), measure(dist_of(z2, q))
        if r1 > r2 + tol:
            return dict(q=q, z1=z1, z2=z2, rho1=r1, rho2=r2)
    return None

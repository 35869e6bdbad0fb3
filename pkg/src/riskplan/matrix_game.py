"""Exact solution of small zero-sum matrix games by vertex enumeration.

The row player mixes over rows to minimise the worst column expectation:

    min_x max_j  sum_i x_i M[i, j]

This is the LP ``min v  s.t.  M^T x <= v, sum x = 1, x >= 0``. Every
vertex of its feasible region makes ``m`` of the ``n + m`` inequalities
tight, so enumerating those index sets and solving the square systems finds
the optimum exactly. The column player's maximin problem is solved the same
way to certify the value.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

MAX_DIM = 4
FEAS_TOL = 1e-9


class GameTooLarge(ValueError):
    pass


def _minimise_max(M: np.ndarray) -> tuple[np.ndarray, float]:
    m, n = M.shape
    # unknowns (x_1..x_m, v); inequality rows: M[:, j]^T x - v <= 0 and -x_i <= 0
    ineq = np.vstack([
        np.hstack([M.T, -np.ones((n, 1))]),
        np.hstack([-np.eye(m), np.zeros((m, 1))]),
    ])
    eq = np.concatenate([np.ones(m), [0.0]])
    best_x, best_v = None, np.inf
    for tight in combinations(range(n + m), m):
        A = np.vstack([ineq[list(tight)], eq])
        rhs = np.zeros(m + 1)
        rhs[-1] = 1.0
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        sol = np.linalg.solve(A, rhs)
        x, v = sol[:m], sol[m]
        if np.any(x < -FEAS_TOL) or np.any(M.T @ x > v + FEAS_TOL):
            continue
        if v < best_v - 1e-12:
            best_x, best_v = x, v
    x = np.clip(best_x, 0.0, None)
    x /= x.sum()
    return x, float(np.max(M.T @ x))


def solve_matrix_game(cost, max_dim: int = MAX_DIM) -> tuple[np.ndarray, float]:
    """Minimising row mixture and game value for a ``rows x scenarios`` cost matrix.

    >>> x, v = solve_matrix_game([[0, 2], [2, 0]])
    >>> v
    1.0
    """
    M = np.atleast_2d(np.asarray(cost, dtype=float))
    if M.ndim != 2 or M.size == 0:
        raise ValueError("cost must be a non-empty matrix")
    if max(M.shape) > max_dim:
        raise GameTooLarge(f"game of shape {M.shape} exceeds the {max_dim}x{max_dim} enumeration limit")
    x, upper = _minimise_max(M)
    y, lower = _minimise_max(-M.T)
    lower = -lower
    if abs(upper - lower) > 1e-9 * max(1.0, abs(upper)):  # pragma: no cover - minimax theorem
        raise ArithmeticError(f"minimax {upper} and maximin {lower} disagree")
    return x, upper


def maximin_mixture(cost) -> tuple[np.ndarray, float]:
    """The scenario player's optimal mixture and the certified lower bound."""
    M = np.atleast_2d(np.asarray(cost, dtype=float))
    y, v = _minimise_max(-M.T)
    return y, -v

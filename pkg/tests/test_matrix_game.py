import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskplan.matrix_game import GameTooLarge, maximin_mixture, solve_matrix_game


def grid_value(M, step=0.01):
    """Best worst-column expectation over a grid of row mixtures (two rows)."""
    xs = np.linspace(0, 1, int(round(1 / step)) + 1)
    return min(float(np.max(x * M[0] + (1 - x) * M[1])) for x in xs)


def test_matching_pennies():
    x, v = solve_matrix_game([[0, 2], [2, 0]])
    assert v == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(x, [0.5, 0.5])
    assert grid_value(np.array([[0, 2], [2, 0]])) == pytest.approx(1.0, abs=1e-12)


def test_dominated_row_gets_no_weight():
    x, v = solve_matrix_game([[1, 1], [2, 3]])
    assert x.tolist() == [1.0, 0.0] and v == 1.0


def test_single_entry():
    x, v = solve_matrix_game([[3.5]])
    assert x.tolist() == [1.0] and v == 3.5


def test_too_large():
    with pytest.raises(GameTooLarge):
        solve_matrix_game(np.zeros((5, 2)))


def test_empty():
    with pytest.raises(ValueError):
        solve_matrix_game(np.zeros((0, 2)))


def test_maximin_certifies_value():
    y, lower = maximin_mixture([[0, 2], [2, 0]])
    assert lower == pytest.approx(1.0) and np.allclose(y, [0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_two_by_two_matches_grid(vals):
    M = np.array(vals).reshape(2, 2)
    x, v = solve_matrix_game(M)
    assert np.all(x >= 0) and x.sum() == pytest.approx(1.0)
    assert v == pytest.approx(float(np.max(x @ M)), abs=1e-9)
    # the grid can only do worse; with step .01 by at most .01 * spread
    ref = grid_value(M)
    assert v <= ref + 1e-9
    assert ref - v <= 0.01 * (M.max() - M.min()) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_value_between_pure_bounds(m, n, seed):
    M = np.random.default_rng(seed).uniform(-3, 3, (m, n))
    x, v = solve_matrix_game(M)
    y, lower = maximin_mixture(M)
    assert v == pytest.approx(lower, abs=1e-9)
    assert M.min(axis=0).max() - 1e-9 <= v <= M.max(axis=1).min() + 1e-9

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randmdp import random_mdp
from riskplan.distribution import return_distribution
from riskplan.domains import build
from riskplan.mdp import Mdp, Policy, mdp_from_rows
from riskplan.solvers import (
    bellman_residual,
    policy_evaluation,
    q_values,
    value_iteration,
    worst_case_cost,
    worst_case_policy,
)


def risky_state():
    # action 0: cost 2 surely; action 1: cost 0 w.p. .9, 3 w.p. .1
    rows = {(0, 0): [(1, 1.0, 2.0)], (0, 1): [(1, 0.9, 0.0), (2, 0.1, 3.0)]}
    return mdp_from_rows(3, 2, rows, horizon=1, terminals=[1, 2])


def test_absorbing_state_has_zero_value():
    m = Mdp(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), gamma=0.9, horizon=None, terminals=[0])
    v, _ = value_iteration(m)
    assert v[0] == 0.0


def test_geometric_series():
    m = Mdp(np.ones((1, 1, 1)), np.ones((1, 1, 1)), gamma=0.5, horizon=None)
    v, _ = value_iteration(m, tol=1e-12)
    assert v[0] == pytest.approx(2.0, abs=1e-11)


def test_fig22_chain_expected_cost():
    m = build("fig22-chain")
    v, pol = value_iteration(m)
    assert v[0] == pytest.approx(2.0, abs=1e-12)
    assert policy_evaluation(m, pol)[0] == pytest.approx(2.0, abs=1e-12)


def test_uniform_policy_averages():
    m = mdp_from_rows(2, 2, {(0, 0): [(1, 1.0, 0.0)], (0, 1): [(1, 1.0, 2.0)]}, horizon=1, terminals=[1])
    assert policy_evaluation(m, Policy.uniform(2, 2))[0] == pytest.approx(1.0)


def test_ties_go_to_lowest_action():
    m = mdp_from_rows(2, 3, {(0, 0): [(1, 1.0, 1.0)]}, horizon=1, terminals=[1])
    _, pol = value_iteration(m)
    assert pol.greedy_actions(0)[0] == 0


@pytest.mark.parametrize("seed", range(5))
def test_discounted_residual_and_fixed_point(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, binary_costs=False).with_(horizon=None, gamma=0.8)
    tol = 1e-9
    v, pol = value_iteration(m, tol)
    assert bellman_residual(m, v) <= tol
    assert np.allclose(policy_evaluation(m, pol), v, atol=10 * tol)
    assert np.array_equal(pol.greedy_actions(), np.argmin(q_values(m, v), axis=1))


def test_contraction_per_sweep():
    rng = np.random.default_rng(3)
    m = random_mdp(rng, binary_costs=False).with_(horizon=None, gamma=0.7)
    v = np.zeros(m.num_states)
    prev = None
    for _ in range(20):
        v_new = q_values(m, v).min(axis=1)
        diff = np.max(np.abs(v_new - v))
        if prev is not None and prev > 1e-12:
            assert diff <= m.gamma * prev + 1e-12
        prev, v = diff, v_new


def test_deterministic_output():
    m = build("grid-nav")
    a = value_iteration(m)[1].probs
    b = value_iteration(m)[1].probs
    assert np.array_equal(a, b)


def test_unbounded_policy_evaluation_is_exact():
    m = Mdp(np.ones((1, 2, 1)), np.array([[[1.0], [3.0]]]), gamma=0.5, horizon=None)
    assert policy_evaluation(m, Policy.uniform(1, 2))[0] == pytest.approx(4.0, abs=1e-12)


class TestWorstCase:
    def test_fig22_chain(self):
        assert worst_case_cost(build("fig22-chain")) == 4.0

    def test_safe_action_wins(self):
        assert worst_case_cost(risky_state()) == 2.0

    def test_deterministic_mdp_matches_expected_cost(self):
        m = build("grid-nav", slip=0.0)
        assert worst_case_cost(m) == pytest.approx(value_iteration(m)[0][0])

    @pytest.mark.parametrize("seed", range(20))
    def test_equals_max_atom_of_induced_policy(self, seed):
        m = random_mdp(np.random.default_rng(seed), binary_costs=False)
        dist = return_distribution(m, worst_case_policy(m))
        assert dist.max == pytest.approx(worst_case_cost(m), abs=1e-9)

    def test_needs_finite_horizon(self):
        m = Mdp(np.ones((1, 1, 1)), np.ones((1, 1, 1)), gamma=0.5, horizon=None)
        with pytest.raises(ValueError):
            worst_case_cost(m)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), stochastic=st.booleans())
def test_distribution_mean_matches_policy_evaluation(seed, stochastic):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, binary_costs=False)
    if stochastic:
        pol = Policy(rng.dirichlet(np.ones(m.num_actions), size=(m.horizon, m.num_states)))
    else:
        pol = Policy.deterministic(rng.integers(m.num_actions, size=m.num_states), m.num_actions)
    dist = return_distribution(m, pol)
    assert dist.mean == pytest.approx(policy_evaluation(m, pol)[m.initial_state], abs=1e-8)

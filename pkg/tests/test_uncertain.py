import numpy as np
import pytest

from randmdp import random_mdp, random_uncertain
from riskplan.domains import build
from riskplan.mdp import InvalidMdpError, mdp_from_rows
from riskplan.solvers import value_iteration
from riskplan.uncertain import (
    PlanCapExceeded,
    SampleUncertainMdp,
    evaluate_regret,
    exact_minimax_regret,
    regret_cost,
    robust_option_evaluation,
    robust_policy_evaluation,
    robust_value_iteration,
    solve_minimax_regret_approx,
    solve_minimax_regret_options,
    uncertain_from_dict,
    uncertain_to_dict,
)


def constant_samples(*costs):
    return SampleUncertainMdp(tuple(
        mdp_from_rows(2, 1, {(0, 0): [(1, 1.0, c)]}, horizon=1, terminals=[1]) for c in costs
    ))


def twin(m):
    return SampleUncertainMdp((m, m))


class TestSampleSet:
    def test_shared_fields_enforced(self):
        a = mdp_from_rows(2, 1, {(0, 0): [(1, 1.0, 0.0)]}, horizon=1, terminals=[1])
        b = a.with_(horizon=2)
        with pytest.raises(InvalidMdpError, match="sample 1"):
            SampleUncertainMdp((a, b))

    def test_nonempty(self):
        with pytest.raises(InvalidMdpError):
            SampleUncertainMdp(())

    def test_schema_round_trip(self):
        u = build("current-field")
        back = uncertain_from_dict(uncertain_to_dict(u))
        for m, n in zip(u.samples, back.samples):
            assert np.array_equal(m.P, n.P) and np.array_equal(m.C, n.C)

    def test_schema_errors_name_the_sample(self):
        doc = uncertain_to_dict(build("regret-bandit"))
        doc["samples"][1]["transitions"][0]["next"][0]["p"] = 0.3
        with pytest.raises(InvalidMdpError, match=r"samples\[1\]\.transitions\[0\]"):
            uncertain_from_dict(doc)


class TestRobust:
    def test_worst_constant(self):
        w, _ = robust_value_iteration(constant_samples(1.0, 3.0))
        assert w[0] == 3.0

    @pytest.mark.parametrize("seed", range(5))
    def test_identical_samples(self, seed):
        m = random_mdp(np.random.default_rng(seed), binary_costs=False)
        assert np.allclose(robust_value_iteration(twin(m))[0], value_iteration(m)[0], atol=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_at_least_each_sample_optimum(self, seed):
        u = random_uncertain(np.random.default_rng(seed), max_states=3)
        w, pol = robust_value_iteration(u)
        for m in u.samples:
            assert np.all(w >= value_iteration(m)[0] - 1e-9)
        assert np.allclose(robust_policy_evaluation(u, pol), w, atol=1e-9)

    def test_discounted(self):
        rng = np.random.default_rng(1)
        u = SampleUncertainMdp(tuple(m.with_(horizon=None, gamma=0.8) for m in random_uncertain(rng).samples))
        w, pol = robust_value_iteration(u, tol=1e-12)
        assert np.allclose(robust_policy_evaluation(u, pol, tol=1e-12), w, atol=1e-9)


class TestRegretCost:
    def test_bandit(self):
        t = regret_cost(build("regret-bandit")).table[0, 0]
        assert t.tolist() == [[0.0, 2.0], [2.0, 0.0]]

    @pytest.mark.parametrize("seed", range(20))
    def test_invariants(self, seed):
        u = random_uncertain(np.random.default_rng(seed))
        t = regret_cost(u).table
        assert np.all(t >= -1e-9)
        assert np.allclose(t.min(axis=2), 0.0, atol=1e-9)

    def test_identical_samples(self):
        m = random_mdp(np.random.default_rng(3), binary_costs=False)
        t = regret_cost(twin(m)).table
        assert np.array_equal(t[..., 0], t[..., 1])


class TestApprox:
    def test_bandit_deterministic(self):
        w, pol = solve_minimax_regret_approx(build("regret-bandit"))
        assert w[0] == 2.0
        assert evaluate_regret(build("regret-bandit"), pol)[1] == 2.0

    def test_bandit_stochastic(self):
        u = build("regret-bandit")
        w, pol = solve_minimax_regret_approx(u, stochastic=True)
        assert w[0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(pol.at(0)[0], [0.5, 0.5])
        assert evaluate_regret(u, pol)[1] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("stochastic", [False, True])
    def test_identical_samples(self, stochastic):
        m = random_mdp(np.random.default_rng(5), binary_costs=False)
        w, pol = solve_minimax_regret_approx(twin(m), stochastic=stochastic)
        assert w[m.initial_state] == pytest.approx(0.0, abs=1e-9)
        assert evaluate_regret(twin(m), pol)[1] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("stochastic", [False, True])
    def test_upper_bounds_true_regret(self, stochastic):
        for seed in range(120):
            u = random_uncertain(np.random.default_rng(seed), num_samples=int(1 + seed % 3))
            w, pol = solve_minimax_regret_approx(u, stochastic=stochastic)
            _, worst = evaluate_regret(u, pol)
            assert worst <= w[u.ref.initial_state] + 1e-6, seed
            assert w[u.ref.initial_state] == pytest.approx(
                robust_policy_evaluation(u, pol, cost="regret")[u.ref.initial_state], abs=1e-9)

    def test_stochastic_no_worse_than_deterministic(self):
        for seed in range(30):
            u = random_uncertain(np.random.default_rng(seed))
            det = solve_minimax_regret_approx(u)[0]
            sto = solve_minimax_regret_approx(u, stochastic=True)[0]
            assert np.all(sto <= det + 1e-9)


class TestExact:
    def test_bandit(self):
        u = build("regret-bandit")
        assert exact_minimax_regret(u)[0] == 2.0
        value, pol = exact_minimax_regret(u, "grid-stochastic", 0.01)
        assert value == pytest.approx(1.0, abs=1e-12)
        assert evaluate_regret(u, pol)[1] == pytest.approx(1.0, abs=1e-12)

    def test_identical_samples(self):
        m = random_mdp(np.random.default_rng(2), binary_costs=False).with_(horizon=1)
        value, pol = exact_minimax_regret(twin(m))
        assert value == pytest.approx(0.0, abs=1e-12)
        assert evaluate_regret(twin(m), pol)[0] == pytest.approx([0.0, 0.0], abs=1e-12)

    @pytest.mark.parametrize("seed", range(15))
    def test_sandwich(self, seed):
        u = random_uncertain(np.random.default_rng(seed), max_states=2)
        det = exact_minimax_regret(u)[0]
        sto = exact_minimax_regret(u, "grid-stochastic", 0.1)[0]
        assert det >= sto - 1e-12 and sto >= -1e-9

    def test_regrets_nonnegative(self):
        u = random_uncertain(np.random.default_rng(0))
        _, pol = exact_minimax_regret(u)
        assert np.all(evaluate_regret(u, pol)[0] >= -1e-9)

    def test_caps(self):
        u = build("current-field")
        with pytest.raises(PlanCapExceeded):
            exact_minimax_regret(u, cap=1000)
        with pytest.raises(ValueError):
            exact_minimax_regret(build("regret-bandit"), "grid-stochastic", 0.3)
        with pytest.raises(ValueError):
            exact_minimax_regret(build("regret-bandit"), "mixed")


class TestOptions:
    def test_one_step_matches_approx_on_bandit(self):
        u = build("regret-bandit")
        w, pol = solve_minimax_regret_options(u, 1)
        assert w[0] == solve_minimax_regret_approx(u)[0][0] == 2.0
        assert pol.plan(0, 0)[0] == 0

    @pytest.mark.parametrize("seed", range(25))
    def test_one_step_matches_approx(self, seed):
        u = random_uncertain(np.random.default_rng(seed))
        assert np.allclose(solve_minimax_regret_options(u, 1)[0], solve_minimax_regret_approx(u)[0], atol=1e-9)

    def test_current_field_longer_options_help(self):
        u = build("current-field")
        w1, p1 = solve_minimax_regret_options(u, 1)
        w2, p2 = solve_minimax_regret_options(u, 2)
        s0 = u.ref.initial_state
        assert w2[s0] < w1[s0]
        assert evaluate_regret(u, p2)[1] <= evaluate_regret(u, p1)[1] + 1e-9
        # the reported value is exactly the option policy's adversarial regret
        assert robust_option_evaluation(u, p2) == pytest.approx(w2[s0], abs=1e-9)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_identical_samples(self, n):
        m = random_mdp(np.random.default_rng(4), binary_costs=False)
        w, _ = solve_minimax_regret_options(twin(m), n)
        assert w[m.initial_state] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(15))
    def test_options_upper_bound(self, seed):
        u = random_uncertain(np.random.default_rng(seed))
        for n in (1, 2, 3):
            w, pol = solve_minimax_regret_options(u, n)
            assert evaluate_regret(u, pol)[1] <= w[u.ref.initial_state] + 1e-6

    def test_cap(self):
        with pytest.raises(PlanCapExceeded) as info:
            solve_minimax_regret_options(build("current-field", width=4, length=6), 4, cap=50)
        assert info.value.count > 50

    def test_bad_length(self):
        with pytest.raises(ValueError):
            solve_minimax_regret_options(build("regret-bandit"), 0)

    def test_discounted(self):
        rng = np.random.default_rng(8)
        u = SampleUncertainMdp(tuple(m.with_(horizon=None, gamma=0.7) for m in random_uncertain(rng).samples))
        w1, _ = solve_minimax_regret_options(u, 1, tol=1e-12)
        assert np.allclose(w1, solve_minimax_regret_approx(u, tol=1e-12)[0], atol=1e-8)
        w2, p2 = solve_minimax_regret_options(u, 2, tol=1e-12)
        assert evaluate_regret(u, p2, tol=1e-12)[1] <= w2[u.ref.initial_state] + 1e-6

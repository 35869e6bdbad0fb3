import numpy as np
import pytest

from riskplan.bamdp import (
    BamdpProblem,
    BeliefState,
    DirichletBelief,
    bamdp_from_dict,
    bamdp_to_dict,
    belief_update,
    exact_bamdp_cvar,
    predictive_transition,
    root_sample,
)
from riskplan.domains import build
from riskplan.mdp import InvalidMdpError
from riskplan.oracles import OracleCapExceeded


def bandit_belief(counts):
    counts = np.asarray(counts, dtype=float)
    k = counts.size
    N = np.zeros((k + 1, 1, k + 1))
    N[0, 0, 1:] = counts
    N[1:, 0, 0] = 1.0
    return DirichletBelief(N, np.zeros_like(N))


def arm2_only(counts=(1.0, 1.0), pulls=2):
    """Only the uncertain arm, pulled ``pulls`` times through the choice state."""
    N = np.zeros((3, 1, 3))
    C = np.zeros_like(N)
    N[0, 0, 1:] = counts
    C[0, 0, 2] = 2.0
    N[1:, 0, 0] = 1.0
    return BamdpProblem(DirichletBelief(N, C), horizon=2 * pulls - 1)


class TestPredictive:
    @pytest.mark.parametrize("counts, expected", [
        ((1, 1), (0.5, 0.5)),
        ((2, 1), (2 / 3, 1 / 3)),
        ((5, 5, 10), (0.25, 0.25, 0.5)),
    ])
    def test_normalised_counts(self, counts, expected):
        p = predictive_transition(bandit_belief(counts), 0, 0)
        assert np.allclose(p[1:], expected) and p.sum() == pytest.approx(1.0)

    def test_uncovered_pair(self):
        with pytest.raises(IndexError):
            predictive_transition(bandit_belief((1, 1)), 0, 3)


class TestUpdate:
    def test_increments_one_count(self):
        b = bandit_belief((1, 1))
        once = belief_update(b, 0, 0, 1)
        assert once.counts[0, 0, 1:].tolist() == [2.0, 1.0]
        assert belief_update(once, 0, 0, 1).counts[0, 0, 1:].tolist() == [3.0, 1.0]
        assert b.counts[0, 0, 1] == 1.0

    def test_commutes(self):
        b = bandit_belief((1, 2, 3))
        xy = belief_update(belief_update(b, 0, 0, 1), 0, 0, 3)
        yx = belief_update(belief_update(b, 0, 0, 3), 0, 0, 1)
        assert np.array_equal(xy.counts, yx.counts)

    def test_belief_validation(self):
        with pytest.raises(InvalidMdpError, match="no successor"):
            DirichletBelief(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)))
        with pytest.raises(InvalidMdpError):
            DirichletBelief(-np.ones((1, 1, 1)), np.zeros((1, 1, 1)))

    def test_budget_range(self):
        with pytest.raises(ValueError):
            BeliefState(0, bandit_belief((1, 1)), 0.0)


class TestRootSample:
    def test_degenerate_counts(self):
        b = bandit_belief((1e6, 1))
        close = sum(abs(root_sample(b, seed).P[0, 0, 1] - 1.0) <= 1e-2 for seed in range(100))
        assert close >= 99

    def test_reproducible_and_valid(self):
        b = build("two-arm-bamdp").prior
        m1, m2 = root_sample(b, 7), root_sample(b, 7)
        assert np.array_equal(m1.P, m2.P)
        assert np.allclose(m1.P.sum(axis=2), 1.0)
        assert not np.array_equal(m1.P, root_sample(b, 8).P)


class TestExact:
    def test_two_arm_risk_averse(self):
        r = exact_bamdp_cvar(build("two-arm-bamdp"), 0.5)
        assert r.value == 1.0 and r.action == 0 and r.tied_actions == (0,)

    def test_two_arm_risk_neutral_tie(self):
        r = exact_bamdp_cvar(build("two-arm-bamdp"), 1.0)
        assert r.value == pytest.approx(1.0) and r.tied_actions == (0, 1)

    def test_learning_along_branches(self):
        # first pull mean 1; then 2/3 after a free outcome, 4/3 after a costly one
        assert exact_bamdp_cvar(arm2_only(), 1.0).value == pytest.approx(2.0, abs=1e-12)

    def test_learning_changes_the_tail(self):
        # outcomes 0, 2, 2, 4 with probabilities 1/3, 1/6, 1/6, 1/3
        assert exact_bamdp_cvar(arm2_only(), 1 / 3).value == pytest.approx(4.0, abs=1e-12)
        assert exact_bamdp_cvar(arm2_only(), 0.5).value == pytest.approx((4 / 3 + 2 / 6) / 0.5, abs=1e-12)

    @pytest.mark.parametrize("name, params", [("two-arm-bamdp", {}), ("two-arm-bamdp", {"pulls": 2}),
                                              ("two-arm-bamdp", {"counts": (2, 1), "pulls": 2})])
    def test_monotone_in_alpha(self, name, params):
        p = build(name, **params)
        vals = [exact_bamdp_cvar(p, a).value for a in (0.1, 0.25, 0.5, 0.75, 1.0)]
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))

    def test_known_mdp_matches_static_oracle(self):
        p = BamdpProblem.from_mdp(build("fig22-chain"))
        assert exact_bamdp_cvar(p, 0.5).value == pytest.approx(3.0, abs=1e-6)

    def test_cap(self):
        with pytest.raises(OracleCapExceeded):
            exact_bamdp_cvar(build("two-arm-bamdp", pulls=4), 0.5, cap=100)


class TestSchema:
    def test_round_trip(self):
        p = build("two-arm-bamdp", counts=(2, 3), pulls=2)
        back = bamdp_from_dict(bamdp_to_dict(p))
        assert np.array_equal(back.prior.counts, p.prior.counts)
        assert np.array_equal(back.prior.known_cost, p.prior.known_cost)
        assert (back.horizon, back.gamma, back.initial_state) == (p.horizon, p.gamma, p.initial_state)

    def test_needs_horizon(self):
        doc = bamdp_to_dict(build("two-arm-bamdp"))
        doc["horizon"] = None
        with pytest.raises(InvalidMdpError, match="horizon"):
            bamdp_from_dict(doc)

    def test_counts_must_be_positive(self):
        doc = bamdp_to_dict(build("two-arm-bamdp"))
        doc["prior"][1]["next"][0]["count"] = 0.0
        with pytest.raises(InvalidMdpError, match=r"prior\[1\]"):
            bamdp_from_dict(doc)

    def test_missing_row(self):
        doc = bamdp_to_dict(build("two-arm-bamdp"))
        del doc["prior"][0]
        with pytest.raises(InvalidMdpError, match="missing"):
            bamdp_from_dict(doc)

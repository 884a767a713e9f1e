"""Unit tests for the three long-run reward evaluators."""

import itertools
import math

import numpy as np
import pytest

from ehpolicy import arrivals as arr
from ehpolicy import evaluation as ev
from ehpolicy import policies as pol
from ehpolicy import rewards as rw

AWGN1 = rw.RewardFunction.awgn(1.0)
SQRT = rw.RewardFunction.sqrt_rate()

# frozen series values, computed once from the level walk by hand
T_MAXIMIN_C1_P05 = 0.17328679513998632   # = 0.25 * ln 2
T_MAXIMIN_C2_P05 = 0.28116757230940415
T_FRACTION_C1_P05 = 0.13915766824910514


def stationary_gain(P: np.ndarray, rewards_by_state: np.ndarray) -> float:
    """Long-run average reward of a fixed chain via its stationary law."""
    n = P.shape[0]
    a = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    dist, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(dist @ rewards_by_state)


def brute_force_best(model: ev.MdpModel) -> float:
    """Enumerate every deterministic stationary policy on the grid."""
    n = model.states
    best = -np.inf
    for actions in itertools.product(*(range(i + 1) for i in range(n))):
        P = np.vstack([model.transition_row(i, actions[i]) for i in range(n)])
        value = stationary_gain(P, model.action_rewards[list(actions)])
        best = max(best, value)
    return best


class TestStep:
    def test_overflow_clipped(self):
        out = ev.step(0.8, 0.5, 0.3, 1.0)
        assert out.before == 0.8
        assert out.after == 1.0
        assert out.consumed == pytest.approx(0.3, abs=1e-15)
        assert out.carried == pytest.approx(0.7, abs=1e-15)

    def test_exact_drain(self):
        out = ev.step(0.4, 0.1, 0.5, 1.0)
        assert out.after == 0.5
        assert out.carried == 0.0

    def test_slack_clamped(self):
        out = ev.step(0.5, 0.0, 0.5 + 5e-10, 1.0)
        assert out.consumed == 0.5
        assert out.carried == 0.0

    def test_overdraw_rejected(self):
        with pytest.raises(ev.AdmissibilityError):
            ev.step(0.1, 0.0, 0.5, 1.0)


class TestBernoulliSeries:
    def test_greedy_is_single_term(self):
        for c in (0.25, 1.0, 3.0):
            for p in (0.1, 0.5, 0.9):
                res = ev.bernoulli_reward(pol.GreedyPolicy(), AWGN1, c, p)
                assert res.value == p * AWGN1.value(c)
                assert res.residual == 0.0

    def test_maximin_known_values(self):
        omega = pol.MaximinAwgnPolicy(1.0, 0.5)
        res1 = ev.bernoulli_reward(omega, AWGN1, 1.0, 0.5)
        assert res1.value == pytest.approx(0.25 * math.log(2.0), abs=1e-15)
        assert res1.value == pytest.approx(T_MAXIMIN_C1_P05, abs=1e-15)
        assert res1.residual == 0.0
        res2 = ev.bernoulli_reward(omega, AWGN1, 2.0, 0.5)
        assert res2.value == pytest.approx(T_MAXIMIN_C2_P05, abs=1e-15)

    def test_fixed_fraction_known_value(self):
        res = ev.bernoulli_reward(pol.FixedFractionPolicy(0.5), AWGN1, 1.0, 0.5)
        assert res.value == pytest.approx(T_FRACTION_C1_P05, abs=1e-15)
        assert res.residual is not None and res.residual <= 1e-15

    def test_sqrt_exact_walks(self):
        omega = pol.MaximinPolicy(SQRT, 0.5)
        res3 = ev.bernoulli_reward(omega, SQRT, 3.0, 0.5)
        assert res3.value == pytest.approx(0.5 * (math.sqrt(4.0) - 1.0), abs=1e-12)
        # from 8 the policy spends 7 (leaving 1), then spends the final 1
        res8 = ev.bernoulli_reward(omega, SQRT, 8.0, 0.5)
        want = 0.5 * (math.sqrt(8.0) - 1.0) + 0.25 * (math.sqrt(2.0) - 1.0)
        assert res8.value == pytest.approx(want, abs=1e-9)

    def test_hand_rolled_two_level_walk(self):
        # c=2, p=0.5: consume 5/3 then 1/3
        omega = pol.MaximinAwgnPolicy(1.0, 0.5)
        want = 0.5 * AWGN1.value(5.0 / 3.0) + 0.25 * AWGN1.value(1.0 / 3.0)
        res = ev.bernoulli_reward(omega, AWGN1, 2.0, 0.5)
        assert res.value == pytest.approx(want, abs=1e-14)

    def test_method_label(self):
        res = ev.bernoulli_reward(pol.GreedyPolicy(), AWGN1, 1.0, 0.5)
        assert res.method == "bernoulli_series"
        assert res.as_dict()["method"] == "bernoulli_series"
        assert "stderr" not in res.as_dict()

    def test_probability_validated(self):
        with pytest.raises(ValueError):
            ev.bernoulli_reward(pol.GreedyPolicy(), AWGN1, 1.0, 0.0)


class TestDerivativeCheck:
    def test_identity_at_smooth_point(self):
        check = ev.bernoulli_derivative_check(AWGN1, 0.5, 2.0)
        assert not check.skipped
        assert check.analytic_slope == pytest.approx(3.0 / 32.0, abs=1e-15)
        assert abs(check.fd_slope - check.analytic_slope) <= 1e-4

    def test_kink_is_skipped_with_warning(self):
        with pytest.warns(UserWarning):
            check = ev.bernoulli_derivative_check(AWGN1, 0.5, 4.0)
        assert check.skipped
        assert check.nearest_kink == pytest.approx(4.0, abs=1e-9)

    @pytest.mark.parametrize("p", [0.3, 0.7])
    @pytest.mark.parametrize("c", [0.6, 1.7, 3.3])
    def test_identity_across_cells(self, p, c):
        check = ev.bernoulli_derivative_check(AWGN1, p, c)
        if check.skipped:
            pytest.skip("landed on a kink")
        assert abs(check.fd_slope - check.analytic_slope) <= 1e-4


class TestMdpModel:
    def test_grid_and_rewards(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 4)
        np.testing.assert_allclose(model.grid, [0.0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(model.action_rewards, AWGN1.value(model.grid))
        assert model.cell == 0.25

    def test_transition_rows_are_distributions(self):
        model = ev.build_mdp(AWGN1, arr.LimitedUniformArrivals(1.0, 1.4), 8)
        for i in range(model.states):
            for j in range(i + 1):
                row = model.transition_row(i, j)
                assert row.sum() == pytest.approx(1.0, abs=1e-12)
                assert np.all(row >= 0.0)
                # nothing below the post-consumption level
                assert np.all(row[: i - j] == 0.0)

    def test_transition_row_bounds_checked(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 2)
        with pytest.raises(ValueError):
            model.transition_row(1, 2)
        with pytest.raises(ValueError):
            model.transition_row(3, 0)


class TestOptimalGain:
    def test_single_cell_chain_is_one_shot(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 1)
        res, actions = ev.optimal_gain(model, eps=1e-12)
        assert res.value == pytest.approx(0.5 * AWGN1.value(1.0), abs=1e-9)
        assert actions[1] == 1

    @pytest.mark.parametrize(
        "dist",
        [
            arr.BernoulliArrivals(1.0, 0.4),
            arr.LimitedUniformArrivals(1.0, 1.0),
            arr.LimitedUniformArrivals(1.0, 1.8),
        ],
    )
    @pytest.mark.parametrize("cells", [2, 3])
    def test_matches_brute_force_enumeration(self, dist, cells):
        model = ev.build_mdp(AWGN1, dist, cells)
        res, _ = ev.optimal_gain(model, eps=1e-11)
        assert res.value == pytest.approx(brute_force_best(model), abs=1e-8)

    def test_matches_series_on_fine_grid(self):
        omega = pol.MaximinAwgnPolicy(1.0, 0.5)
        series = ev.bernoulli_reward(omega, AWGN1, 2.0, 0.5)
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(2.0, 0.5), 500)
        res, _ = ev.optimal_gain(model, eps=1e-9)
        assert abs(res.value - series.value) <= res.tolerance + 1e-12

    def test_nonconvergence_raises(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 20)
        with pytest.raises(ev.NonConvergenceError) as info:
            ev.optimal_gain(model, eps=1e-30, max_iter=25)
        assert info.value.iterations == 25
        assert info.value.span > 1e-30

    def test_method_label_and_tolerance(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 50)
        res, _ = ev.optimal_gain(model, eps=1e-9)
        assert res.method == "value_iteration"
        assert res.tolerance > 0.0


class TestPolicyGain:
    def test_matches_stationary_solve(self):
        dist = arr.LimitedUniformArrivals(1.0, 1.2)
        model = ev.build_mdp(AWGN1, dist, 3)
        policy = pol.FixedFractionPolicy(0.5)
        res = ev.policy_gain(model, policy, eps=1e-11)
        # snap the policy to the grid exactly as the evaluator does
        h = model.cell
        actions = [int(np.floor(policy.evaluate(level) / h + 1e-9)) for level in model.grid]
        P = np.vstack([model.transition_row(i, actions[i]) for i in range(model.states)])
        want = stationary_gain(P, model.action_rewards[actions])
        assert res.value == pytest.approx(want, abs=1e-9)

    def test_never_beats_optimal(self):
        model = ev.build_mdp(AWGN1, arr.LimitedExponentialArrivals(1.0, 2.0), 200)
        best, _ = ev.optimal_gain(model, eps=1e-9)
        for policy in (
            pol.GreedyPolicy(),
            pol.FixedFractionPolicy(0.5),
            pol.MaximinAwgnPolicy(1.0, 0.5),
        ):
            mine = ev.policy_gain(model, policy, eps=1e-9)
            assert mine.value <= best.value + 1e-9

    def test_greedy_on_grid_is_exact_action_match(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 10)
        res = ev.policy_gain(model, pol.GreedyPolicy(), eps=1e-11)
        assert res.value == pytest.approx(0.5 * AWGN1.value(1.0), abs=1e-9)

    def test_nonconvergence_raises(self):
        model = ev.build_mdp(AWGN1, arr.BernoulliArrivals(1.0, 0.5), 20)
        with pytest.raises(ev.NonConvergenceError):
            ev.policy_gain(model, pol.GreedyPolicy(), eps=1e-30, max_iter=25)


class TestSimulate:
    def test_agrees_with_series(self):
        omega = pol.MaximinAwgnPolicy(1.0, 0.5)
        series = ev.bernoulli_reward(omega, AWGN1, 2.0, 0.5)
        mc = ev.simulate(omega, arr.BernoulliArrivals(2.0, 0.5), AWGN1, 20_000, 32, seed=0)
        assert mc.stderr > 0.0
        assert abs(mc.value - series.value) <= 4.0 * mc.stderr

    def test_reproducible_across_worker_counts(self):
        dist = arr.LimitedUniformArrivals(1.0, 1.4)
        runs = [
            ev.simulate(pol.FixedFractionPolicy(0.4), dist, AWGN1, 2_000, 8, seed=5, workers=w)
            for w in (1, 2, 5)
        ]
        assert runs[0].value == runs[1].value == runs[2].value
        assert runs[0].stderr == runs[1].stderr == runs[2].stderr

    def test_seed_controls_stream(self):
        dist = arr.LimitedExponentialArrivals(1.0, 1.0)
        a = ev.simulate(pol.GreedyPolicy(), dist, AWGN1, 1_000, 4, seed=1)
        b = ev.simulate(pol.GreedyPolicy(), dist, AWGN1, 1_000, 4, seed=1)
        c = ev.simulate(pol.GreedyPolicy(), dist, AWGN1, 1_000, 4, seed=2)
        assert a.value == b.value
        assert a.value != c.value

    def test_tolerance_is_three_stderr(self):
        res = ev.simulate(
            pol.GreedyPolicy(), arr.BernoulliArrivals(1.0, 0.5), AWGN1, 1_000, 4, seed=0
        )
        assert res.tolerance == pytest.approx(3.0 * res.stderr, abs=1e-18)
        assert res.method == "monte_carlo"

    def test_needs_two_paths(self):
        with pytest.raises(ValueError):
            ev.simulate(pol.GreedyPolicy(), arr.BernoulliArrivals(1.0, 0.5), AWGN1, 100, 1, 0)


class TestEvaluationResult:
    def test_as_dict_drops_missing_fields(self):
        res = ev.EvaluationResult(value=1.0, method="x")
        assert res.as_dict() == {"value": 1.0, "method": "x"}

    def test_as_dict_keeps_present_fields(self):
        res = ev.EvaluationResult(value=1.0, method="x", stderr=0.1, tolerance=0.3)
        assert res.as_dict() == {"value": 1.0, "method": "x", "stderr": 0.1, "tolerance": 0.3}

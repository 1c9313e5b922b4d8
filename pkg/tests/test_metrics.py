import dataclasses
import math

import numpy as np
import pytest

from modules.errors import AssumptionViolated, DimensionMismatch
from modules.hindsight import ComparatorTrace
from modules.model import ObservationBatch
from modules.metrics import (
    build_report, cumulative_gap_bound, default_burn_in, dynamic_regret, empirical_constants, moment_spectrum,
    mse, objective_values, path_length, path_length_trace, regret_bound, regret_constant, tracking_gaps,
)
from modules.tracker import MomentHistory, NodeState, evaluate_objective


def _identity_moments(N=3, T=4):
    return MomentHistory(Phi=np.tile(np.eye(N), (T, N, 1, 1)), r=np.zeros((T, N, N)), c=np.zeros((T, N)))


def _trace(v_star):
    N, T, _ = v_star.shape
    return ComparatorTrace(v_star=v_star, converged=np.ones((N, T), bool),
                           iterations=np.ones((N, T), int), degenerate=np.zeros((N, T), bool))


def _power_iteration(M, iters=20000):
    v = np.ones(M.shape[0]) / math.sqrt(M.shape[0])
    for _ in range(iters):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(v @ M @ v)


class TestRegret:
    def test_zero_when_estimates_are_optimal(self, small_run):
        moments, trace = small_run["tracker"].moments, small_run["trace"]
        h = objective_values(moments, trace.v_star, 1.0)
        regret = dynamic_regret(h, h)
        np.testing.assert_array_equal(regret.cumulative, 0.0)

    def test_terms_nonnegative(self, small_run):
        tracker, trace, config = small_run["tracker"], small_run["trace"], small_run["config"]
        moments = tracker.moments
        regret = dynamic_regret(objective_values(moments, tracker.estimates, config.lambda_),
                                objective_values(moments, trace.v_star, config.lambda_))
        assert np.all(regret.per_step >= -1e-8)
        assert np.all(np.diff(regret.cumulative) >= -1e-8)
        assert regret.cumulative[-1] == pytest.approx(regret.per_node.sum())

    def test_single_node_hand_sum(self):
        moments = MomentHistory(Phi=np.array([[[[2.0]]], [[[3.0]]]]), r=np.array([[[1.0]], [[2.0]]]),
                                c=np.array([[1.0], [4.0]]))
        estimates = np.array([[[0.0], [1.0]]])
        v_star = np.array([[[0.5], [2.0 / 3.0]]])
        h_est = objective_values(moments, estimates, 0.0)
        h_star = objective_values(moments, v_star, 0.0)
        expected = 0.0
        for k in range(2):
            node = moments.node_state(0, k + 1)
            expected += evaluate_objective(node, estimates[0, k], 0.0) - evaluate_objective(node, v_star[0, k], 0.0)
        assert dynamic_regret(h_est, h_star).cumulative[-1] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.25 + 1.0 / 6.0)

    def test_objective_values_match_per_node_evaluation(self, small_run):
        moments, estimates = small_run["tracker"].moments, small_run["tracker"].estimates
        h = objective_values(moments, estimates, 1.0)
        for i, k in [(0, 0), (1, 5), (3, moments.T - 1)]:
            node = moments.node_state(i, k + 1)
            assert h[i, k] == pytest.approx(evaluate_objective(node, estimates[i, k], 1.0), rel=1e-12, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            dynamic_regret(np.zeros((2, 3)), np.zeros((3, 2)))


class TestPathLength:
    def test_constant(self):
        assert path_length(np.ones((5, 3))) == 0.0

    def test_two_points(self):
        assert path_length(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)

    def test_single_step(self):
        assert path_length(np.ones((1, 3))) == 0.0

    def test_brute_force(self, rng):
        seq = rng.standard_normal((10, 4))
        expected = sum(np.linalg.norm(seq[k] - seq[k - 1]) for k in range(1, 10))
        assert path_length(seq) == pytest.approx(expected, rel=1e-12)
        trace = path_length_trace(seq)
        assert trace[0] == 0.0 and trace[-1] == pytest.approx(expected, rel=1e-12)


class TestMse:
    def test_zero_error(self, rng):
        v = rng.standard_normal((3, 5, 3))
        np.testing.assert_array_equal(mse(v, v), 0.0)

    def test_hand_case(self):
        estimates = np.array([[[2.0, 0.0]], [[1.0, 1.0]]])
        truth = np.array([[[0.0, 0.0]], [[1.0, 1.0]]])
        np.testing.assert_allclose(mse(estimates, truth), [1.0])

    def test_direct_loop(self, rng):
        est, truth = rng.standard_normal((4, 6, 4)), rng.standard_normal((4, 6, 4))
        expected = [sum(np.sum((est[i, k] - truth[i, k]) ** 2) for i in range(4)) / 16 for k in range(6)]
        np.testing.assert_allclose(mse(est, truth), expected, rtol=1e-12)


class TestConstants:
    def test_bxy_bounded_by_one(self, rng):
        X = rng.uniform(-1, 1, (3, 4))
        batches = [ObservationBatch(t=t, Y=rng.uniform(-1, 1, (3, 4)), X=X) for t in range(1, 5)]
        constants = empirical_constants(batches, X, _identity_moments(), _trace(np.zeros((3, 4, 3))), 0.9, 0.5)
        assert constants.B_xy <= 1.0

    def test_bxy_is_largest_batch_entry(self, rng):
        X = rng.uniform(-1, 1, (3, 4))
        batches = [ObservationBatch(t=t, Y=rng.uniform(-1, 1, (3, 4)), X=X) for t in range(1, 5)]
        batches[2].Y[1, 3] = -3.0
        constants = empirical_constants(batches, X, _identity_moments(), _trace(np.zeros((3, 4, 3))), 0.9, 0.5)
        assert constants.B_xy == 9.0
        assert constants.B_xy == max(batch.max_square() for batch in batches)

    def test_identity_spectrum(self):
        constants = empirical_constants([ObservationBatch(t=1, Y=np.zeros((3, 2)), X=np.zeros((3, 2)))], np.zeros((3, 2)), _identity_moments(),
                                        _trace(np.zeros((3, 4, 3))), 0.9, 0.5)
        assert constants.beta == pytest.approx(1.0)
        assert constants.L_f == pytest.approx(1.0)
        assert constants.mu == pytest.approx(0.1)
        assert constants.rho == pytest.approx(0.5)
        assert constants.d == 0.0

    def test_power_iteration_oracle(self, small_run):
        moments = small_run["tracker"].moments
        times, lam_min, lam_max = moment_spectrum(moments)
        for k in (moments.T // 2, moments.T - 1):
            for i in range(moments.N):
                Phi = moments.Phi[k, i]
                top = _power_iteration(Phi)
                bottom = top - _power_iteration(top * np.eye(moments.N) - Phi)
                assert lam_max[i, k] == pytest.approx(top, rel=1e-6)
                assert lam_min[i, k] == pytest.approx(bottom, rel=1e-6, abs=1e-6 * top)

    def test_stride(self, small_run):
        times, lam_min, _ = moment_spectrum(small_run["tracker"].moments, stride=5)
        assert times[0] == 1 and np.all(np.diff(times) == 5)
        assert lam_min.shape[1] == times.size

    def test_burn_in_default(self):
        assert default_burn_in(10, 5) == 6
        assert default_burn_in(4, 3) == 6


class TestBound:
    def test_worked_constant(self):
        D_h = regret_constant(B_xy=1.0, beta=1.0, L_f=2.0, lambda_=1.0, alpha=0.1, C=1, N=2, gamma=0.5)
        assert D_h == pytest.approx(10 * (2 * math.sqrt(2) * 3 + 1))
        assert D_h == pytest.approx(94.8528, abs=1e-4)

    def test_single_node_drops_sparsity_term(self):
        with_lambda = regret_constant(1.0, 1.0, 2.0, 5.0, 0.1, 1, 1, 0.5)
        without = regret_constant(1.0, 1.0, 2.0, 0.0, 0.1, 1, 1, 0.5)
        assert with_lambda == without

    @pytest.mark.parametrize("kwargs", [
        {"beta": 0.0}, {"alpha": 1.0}, {"gamma": 1.0},
    ])
    def test_assumption_violations(self, kwargs):
        args = dict(B_xy=1.0, beta=1.0, L_f=2.0, lambda_=1.0, alpha=0.1, C=1, N=2, gamma=0.5)
        args.update(kwargs)
        with pytest.raises(AssumptionViolated):
            regret_constant(**args)

    def test_per_node_and_total(self):
        bound = regret_bound(1.0, 1.0, 2.0, 1.0, 0.1, 1, 2, 0.5, initial_gaps=[1.0, 2.0],
                             path_lengths=[0.5, 0.0], path_length_traces=[[0.0, 0.5], [0.0, 0.0]])
        np.testing.assert_allclose(bound.per_node, bound.D_h * np.array([1.5, 2.0]))
        assert bound.total == pytest.approx(3.5 * bound.D_h)
        np.testing.assert_allclose(bound.trace, bound.D_h * np.array([3.0, 3.5]))

    def test_gap_bound(self):
        np.testing.assert_allclose(cumulative_gap_bound(0.5, [1.0], [2.0]), [6.0])
        with pytest.raises(AssumptionViolated):
            cumulative_gap_bound(1.0, [1.0], [2.0])


class TestReport:
    def _report(self, run):
        tracker = run["tracker"]
        return build_report(run["batches"], run["X"], tracker.moments, tracker.estimates, run["trace"],
                            run["config"], truth=run["truth"].v_true)

    def test_window_starts_after_burn_in(self, small_run):
        report = self._report(small_run)
        # C < N: the first moment matrices are rank deficient
        assert report.constants.beta == 0.0
        assert report.t0 == report.constants.t_burn == default_burn_in(4, 3)
        assert np.all(np.isnan(report.window_regret_trace[:report.t0 - 1]))
        gaps = tracking_gaps(small_run["tracker"].estimates, small_run["trace"].v_star)
        np.testing.assert_allclose(report.initial_gaps, gaps[:, report.t0 - 1])

    def test_bound_holds(self, small_run):
        report = self._report(small_run)
        assert report.bound_applicable, report.bound_reason
        assert report.bound_holds
        finite = ~np.isnan(report.bound_trace)
        assert np.all(report.window_regret_trace[finite] <= report.bound_trace[finite])

    def test_to_dict(self, small_run):
        doc = self._report(small_run).to_dict()
        assert {"constants", "D_h", "per_node", "totals", "assumptions_ok"} <= set(doc)
        assert len(doc["per_node"]) == 4
        assert doc["assumptions_ok"]["strong_convexity_global"] is False
        assert doc["totals"]["regret"] == pytest.approx(sum(n["regret"] for n in doc["per_node"]))

    def test_mse_trace(self, small_run):
        report = self._report(small_run)
        np.testing.assert_allclose(report.mse_trace[0], np.sum(small_run["truth"].v_true[:, 0] ** 2) / 16)

    def test_gap_sums_within_contraction_bound(self, small_run):
        report = self._report(small_run)
        gaps = tracking_gaps(small_run["tracker"].estimates, small_run["trace"].v_star)
        np.testing.assert_allclose(report.gap_sums, gaps[:, report.t0 - 1:].sum(axis=1), rtol=1e-12)
        assert report.gap_bounds is not None
        rho = 1.0 - report.alpha * report.constants.beta_burn
        expected = (report.initial_gaps + report.window_path_lengths) / (1.0 - rho)
        np.testing.assert_allclose(report.gap_bounds, expected, rtol=1e-12)
        assert report.gap_bound_holds

    def test_gap_bound_exported(self, small_run):
        report = self._report(small_run)
        doc = report.to_dict()
        assert doc["assumptions_ok"]["gap_bound_holds"] is True
        for i, node in enumerate(doc["per_node"]):
            assert node["gap_sum"] == pytest.approx(report.gap_sums[i], rel=1e-12)
            assert node["gap_bound"] == pytest.approx(report.gap_bounds[i], rel=1e-12)
            assert node["gap_sum"] <= node["gap_bound"]

    def test_gap_bound_skipped_when_step_too_large(self, small_run):
        run = small_run
        tracker = run["tracker"]
        config = dataclasses.replace(run["config"], alpha=run["config"].alpha * 3.0)
        report = build_report(run["batches"], run["X"], tracker.moments, tracker.estimates, run["trace"], config)
        assert report.gap_bounds is None
        assert report.to_dict()["per_node"][0]["gap_bound"] is None
        assert report.assumptions()["gap_bound_holds"] is None

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairfed.availability import (AvailabilityEstimator, AvailabilityKind, AvailabilityModel, EstimatorMode,
                                  inverse_availability_shares, simulate, step, update_estimate, window_diagnostics,
                                  windowed_participation_error)
from fairfed.errors import ContractViolationError, OutOfRangeError


class TestStep:

    def test_certain_availability(self, rng):
        model = AvailabilityModel.bernoulli([1.0, 1.0])
        for t in (1, 7, 1000):
            assert step(model, t, rng).tolist() == [True, True]

    def test_bernoulli_empirical_mean(self, rng):
        model = AvailabilityModel.bernoulli([0.3])
        draws = simulate(model, 100_000, rng)
        assert abs(draws.mean() - 0.3) <= 0.01

    def test_markov_empirical_mean(self, rng):
        model = AvailabilityModel.markov([0.4], correlation_time=5)
        draws = simulate(model, 100_000, rng)
        assert abs(draws.mean() - 0.4) <= 0.02

    def test_markov_lag_correlation(self, rng):
        model = AvailabilityModel.markov([0.5], correlation_time=4)
        draws = simulate(model, 50_000, rng)[:, 0].astype(float)
        lagged = np.corrcoef(draws[:-1], draws[1:])[0, 1]
        assert abs(lagged - 0.75) <= 0.03

    def test_markov_run_lengths(self, rng):
        model = AvailabilityModel.markov([0.4, 1.0], correlation_time=3)
        on, off = model.mean_run_lengths()
        np.testing.assert_allclose(on, [5.0, np.inf])
        np.testing.assert_allclose(off[0], 7.5)
        draws = simulate(model, 200_000, rng)[:, 0]
        edges = np.flatnonzero(np.diff(draws.astype(np.int64)))
        runs = np.diff(edges)
        starts_on = draws[edges[:-1] + 1]
        assert abs(runs[starts_on].mean() - 5.0) <= 0.25
        assert abs(runs[~starts_on].mean() - 7.5) <= 0.4

    def test_markov_unit_correlation_time_is_bernoulli(self):
        p_on, p_off = AvailabilityModel.markov([0.3, 0.8], 1.0).transition_probabilities()
        np.testing.assert_allclose(p_on, [0.3, 0.8])
        np.testing.assert_allclose(p_off, [0.7, 0.2])

    def test_round_zero_rejected(self, rng):
        with pytest.raises(ContractViolationError):
            step(AvailabilityModel.bernoulli([0.5]), 0, rng)

    def test_trace_replay_and_end(self, rng):
        timeline = np.array([[True, False, True], [False, False, True]])
        model = AvailabilityModel.trace(timeline)
        assert model.kind is AvailabilityKind.TRACE
        assert step(model, 2, rng).tolist() == [False, False]
        assert step(model, 3, rng).tolist() == [True, True]
        with pytest.raises(OutOfRangeError):
            step(model, 4, rng)
        np.testing.assert_allclose(model.mean_at(1), [2 / 3, 1 / 3])

    def test_drifting_schedule_interpolates(self):
        model = AvailabilityModel.drifting([1, 11], [[0.5], [0.6]])
        np.testing.assert_allclose(model.mean_at(6), [0.55])
        np.testing.assert_allclose(model.mean_at(50), [0.6])
        assert not model.is_stationary

    @pytest.mark.parametrize("pi", [[0.0], [1.5], []])
    def test_invalid_means(self, pi):
        with pytest.raises(ValueError):
            AvailabilityModel.bernoulli(pi)

    def test_invalid_correlation_time(self):
        with pytest.raises(ValueError):
            AvailabilityModel.markov([0.5], 0.5)

    @settings(max_examples=25, deadline=None)
    @given(pi=st.floats(0.05, 0.95), seed=st.integers(0, 2**16))
    def test_bernoulli_mean_concentrates(self, pi, seed):
        rounds = 4000
        draws = simulate(AvailabilityModel.bernoulli([pi]), rounds, np.random.default_rng(seed))
        assert abs(draws.mean() - pi) <= 4.5 * np.sqrt(pi * (1 - pi) / rounds)


class TestEstimator:

    @pytest.mark.parametrize("history, expected", [((1, 1, 1, 1), 1.0), ((1, 0, 1, 0), 0.5)])
    def test_running_mean(self, history, expected):
        estimator = AvailabilityEstimator(1)
        for t, a in enumerate(history, start=1):
            value = update_estimate(estimator, 0, bool(a), t)
        assert value == pytest.approx(expected)

    def test_sliding_window_floor(self):
        estimator = AvailabilityEstimator(1, EstimatorMode.SLIDING_WINDOW, window=2, floor=0.01)
        for t, a in enumerate((1, 1, 0, 0), start=1):
            value = estimator.update(0, bool(a), t)
        assert value == pytest.approx(0.01)

    def test_estimate_before_observation(self):
        np.testing.assert_array_equal(AvailabilityEstimator(3).estimates, np.ones(3))

    def test_vector_observe_matches_scalar_updates(self, rng):
        history = rng.random((50, 4)) < 0.6
        vector = AvailabilityEstimator(4, EstimatorMode.SLIDING_WINDOW, window=7)
        scalar = AvailabilityEstimator(4, EstimatorMode.SLIDING_WINDOW, window=7)
        for t, row in enumerate(history, start=1):
            vector.observe(row, t)
            for k, a in enumerate(row):
                scalar.update(k, a, t)
        np.testing.assert_allclose(vector.estimates, scalar.estimates)
        np.testing.assert_allclose(vector.estimates, np.clip(history[-7:].mean(axis=0), 0.01, 1.0))

    def test_reset(self):
        estimator = AvailabilityEstimator(2)
        estimator.observe(np.array([False, True]), 1)
        estimator.reset()
        assert estimator.observations.tolist() == [0, 0]

    def test_sliding_window_needs_length(self):
        with pytest.raises(ValueError):
            AvailabilityEstimator(2, EstimatorMode.SLIDING_WINDOW)

    @settings(max_examples=50, deadline=None)
    @given(history=st.lists(st.booleans(), min_size=1, max_size=60), floor=st.floats(0.001, 0.5))
    def test_estimates_stay_in_range(self, history, floor):
        estimator = AvailabilityEstimator(1, floor=floor)
        for t, a in enumerate(history, start=1):
            value = estimator.update(0, a, t)
            assert floor <= value <= 1.0


class TestWindowDiagnostics:

    def test_stationary_perfect_estimator(self):
        truth = np.full((20, 3), 0.4)
        diagnostics = window_diagnostics(truth, truth.copy(), 5, 10)
        assert diagnostics.epsilon == 0.0
        assert diagnostics.delta == 0.0

    def test_linear_drift(self):
        truth = np.linspace(0.5, 0.6, 11)[:, None]
        diagnostics = window_diagnostics(truth, truth, 1, 11)
        assert diagnostics.delta == pytest.approx(0.1)

    def test_noise_bounds_epsilon(self, rng):
        truth = np.full((30, 4), 0.5)
        noisy = truth + rng.uniform(-0.02, 0.02, truth.shape)
        diagnostics = window_diagnostics(truth, noisy, 1, 30)
        assert diagnostics.epsilon <= 0.02
        assert diagnostics.total == pytest.approx(diagnostics.epsilon)

    def test_window_outside_trajectory(self):
        truth = np.full((10, 2), 0.5)
        with pytest.raises(OutOfRangeError):
            window_diagnostics(truth, truth, 5, 10)


class TestParticipationError:

    def test_shares_sum_to_one(self):
        shares = inverse_availability_shares([[0.5, 0.25], [1.0, 1.0]])
        np.testing.assert_allclose(shares, [[1 / 3, 2 / 3], [0.5, 0.5]])

    def test_exact_estimates_have_no_error(self):
        truth = np.tile(np.linspace(0.2, 0.9, 5), (12, 1))
        assert windowed_participation_error(truth, truth, 3, 8) == 0.0

    def test_error_grows_with_bias(self):
        truth = np.tile(np.array([0.3, 0.6, 0.9]), (10, 1))
        small = windowed_participation_error(truth, truth * [1.05, 1.0, 1.0], 1, 10)
        large = windowed_participation_error(truth, truth * [1.3, 1.0, 1.0], 1, 10)
        assert 0 < small < large

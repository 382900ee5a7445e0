import numpy as np
import pytest

from fairfed.errors import ConfigError
from fairfed.surrogate import SurrogateConfig, reliability
from fairfed.toyfl import QuadraticClient, TrainerConfig, verify_descent_bounds
from fairfed.utility import ClientLedger, NoiseKind, UtilityModel
from fairfed.workload import QuadraticWorkload, SyntheticWorkload, UtilitySignal, make_quadratic_clients


def mask(n, *ids):
    available = np.zeros(n, dtype=bool)
    available[list(ids)] = True
    return available


class TestSyntheticWorkload:

    def test_without_surrogates(self, rng):
        workload = SyntheticWorkload(UtilityModel(np.array([0.2, 0.4, 0.6])))
        outcome = workload.play(1, mask(3, 0, 1), np.array([0]), rng)
        np.testing.assert_array_equal(outcome.increments, [0.2, 0.4, 0.6])
        assert not outcome.credit.any()
        assert outcome.contribution == 0.0
        assert len(workload.cache) == 0

    def test_missing_client_is_credited(self, rng):
        cfg = SurrogateConfig(eta0=1.0, decay=0.5)
        workload = SyntheticWorkload(UtilityModel(np.array([0.3, 0.5])), cfg)
        workload.play(1, mask(2, 0, 1), np.array([0]), rng)
        outcome = workload.play(3, mask(2, 1), np.array([1]), rng)
        assert outcome.missing == (0,)
        assert outcome.contribution == pytest.approx(reliability(2, cfg))
        np.testing.assert_allclose(outcome.credit, [0.3 * reliability(2, cfg), 0.0])

    def test_credit_can_be_disabled(self, rng):
        cfg = SurrogateConfig(utility_credit=False)
        workload = SyntheticWorkload(UtilityModel(np.array([0.3, 0.5])), cfg)
        workload.play(1, mask(2, 0), np.array([0]), rng)
        outcome = workload.play(2, mask(2, 1), np.array([1]), rng)
        assert outcome.contribution > 0
        assert not outcome.credit.any()

    def test_never_seen_client_has_no_surrogate(self, rng):
        workload = SyntheticWorkload(UtilityModel(np.array([0.3, 0.5])), SurrogateConfig())
        outcome = workload.play(1, mask(2, 1), np.array([1]), rng)
        assert outcome.missing == ()

    def test_performance_is_utility_rate(self):
        workload = SyntheticWorkload(UtilityModel(np.array([1.0, 1.0])))
        ledger = ClientLedger(2)
        ledger.accrue(mask(2, 0, 1), [0], np.ones(2), 1)
        ledger.accrue(mask(2, 0, 1), [0], np.ones(2), 2)
        overall, per_client = workload.performance(ledger, 2)
        np.testing.assert_allclose(per_client, [1.0, 0.0])
        assert overall == pytest.approx(0.5)


class TestQuadraticClients:

    def test_clusters_without_spread(self, rng):
        clients = make_quadratic_clients([[1.0, 0.0], [-1.0, 2.0]], [2, 1], 0.0, 1.5, rng, [0.0, 0.0])
        assert len(clients) == 3
        np.testing.assert_array_equal(clients[1].optimum, [1.0, 0.0])
        np.testing.assert_array_equal(clients[2].optimum, [-1.0, 2.0])
        assert all(client.curvature == 1.5 for client in clients)

    def test_per_client_curvature(self, rng):
        clients = make_quadratic_clients([[0.0]], [3], 0.1, [1.0, 2.0, 3.0], rng, [0.0])
        assert [client.curvature for client in clients] == [1.0, 2.0, 3.0]


class TestQuadraticWorkload:

    def clients(self):
        return [QuadraticClient([1.0, 0.0]), QuadraticClient([-1.0, 0.0]), QuadraticClient([0.0, 2.0])]

    def test_empty_round_keeps_model(self, rng):
        workload = QuadraticWorkload(self.clients(), [0.0, 0.0], TrainerConfig())
        outcome = workload.play(1, mask(3), np.array([], dtype=np.int64), rng)
        assert not outcome.increments.any()
        np.testing.assert_array_equal(workload.weights, [0.0, 0.0])

    def test_local_reduction_round(self, rng):
        trainer = TrainerConfig(step_size=0.5)
        workload = QuadraticWorkload(self.clients(), [0.0, 0.0], trainer)
        outcome = workload.play(1, mask(3, 0, 1), np.array([0]), rng)
        np.testing.assert_allclose(outcome.increments, [0.375, 0.0, 0.0])
        np.testing.assert_allclose(workload.weights, [0.5, 0.0])
        np.testing.assert_allclose(workload.clients[0].weights, [0.5, 0.0])
        assert 0 in workload.cache

    def test_population_is_copied(self, rng):
        clients = self.clients()
        workload = QuadraticWorkload(clients, [0.0, 0.0], TrainerConfig(step_size=0.5))
        workload.play(1, mask(3, 0), np.array([0]), rng)
        np.testing.assert_array_equal(clients[0].weights, [0.0, 0.0])

    def test_global_benefit_is_bounded(self, rng):
        trainer = TrainerConfig(step_size=0.5, utility_bound=0.1)
        workload = QuadraticWorkload(self.clients(), [0.0, 0.0], trainer, signal=UtilitySignal.GLOBAL_BENEFIT)
        outcome = workload.play(1, mask(3, 0, 1, 2), np.array([2]), rng)
        assert np.all((outcome.increments >= 0) & (outcome.increments <= 0.1))
        assert outcome.increments[2] == pytest.approx(0.1)

    def test_surrogates_enter_the_aggregate(self, rng):
        cfg = SurrogateConfig(eta0=1.0, decay=0.0)
        workload = QuadraticWorkload(self.clients(), [0.0, 0.0], TrainerConfig(step_size=0.5), cfg,
                                     record_trajectory=True)
        workload.play(1, mask(3, 0, 1, 2), np.array([0]), rng)
        before = workload.weights.copy()
        outcome = workload.play(2, mask(3, 1, 2), np.array([1]), rng)
        assert outcome.missing == (0,)
        assert outcome.contribution == pytest.approx(1.0)
        record = workload.trajectory[-1]
        fresh = workload.clients[1].gradient(before)
        cached = np.array([-1.0, 0.0])
        np.testing.assert_allclose(record.surrogate_aggregate, (fresh + cached) / 2)
        assert len(workload.trajectory) == 2
        assert verify_descent_bounds(workload.trajectory, workload.objective, workload.trainer).gap_violations == 0

    def test_performance_improves(self, rng):
        workload = QuadraticWorkload(self.clients(), [3.0, 3.0], TrainerConfig(step_size=0.3))
        ledger = ClientLedger(3)
        for t in range(1, 30):
            workload.play(t, mask(3, 0, 1, 2), np.array([t % 3]), rng)
        overall, per_client = workload.performance(ledger, 29)
        assert 0.5 < overall <= 1.0
        assert np.all((per_client >= 0) & (per_client <= 1))

    def test_initial_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            QuadraticWorkload(self.clients(), [0.0], TrainerConfig())


class TestNoise:

    def test_synthetic_uses_rng(self):
        model = UtilityModel(np.array([0.5, 0.5]), kind=NoiseKind.UNIFORM_BOUNDED, sigma=0.2)
        first = SyntheticWorkload(model).play(1, mask(2, 0), np.array([0]), np.random.default_rng(1))
        second = SyntheticWorkload(model).play(1, mask(2, 0), np.array([0]), np.random.default_rng(1))
        np.testing.assert_array_equal(first.increments, second.increments)

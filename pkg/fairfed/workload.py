"""
Per-arm round players: what happens to utilities and models once a round's
participants are known.

``SyntheticWorkload`` draws bounded utility increments. ``QuadraticWorkload``
trains quadratic clients, aggregates their gradients with optional stale
surrogates for unavailable clients and steps the global model.
"""

import copy
import logging
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .surrogate import SurrogateCache, SurrogateConfig, aggregate_with_surrogates, reliability
from .toyfl import GlobalObjective, QuadraticClient, TrainerConfig, TrajectoryRecord, global_step, local_update
from .utility import ClientLedger, UtilityModel

logger = logging.getLogger(__name__)


class UtilitySignal(Enum):
    LOCAL_REDUCTION = "local_reduction"
    GLOBAL_BENEFIT = "global_benefit"


class RoundOutcome(NamedTuple):
    increments: np.ndarray
    credit: np.ndarray
    contribution: float
    missing: Tuple[int, ...] = ()
    record: Optional[TrajectoryRecord] = None


class SyntheticWorkload(object):
    """
    Bounded random utility increments.

    With surrogates enabled, an unavailable client that participated before is
    offered a credit of ``eta * delta``, where ``delta`` is the increment it
    earned at its last participation and ``eta`` the reliability of that stale
    value. The simulation caps offers with :func:`fairfed.utility.parity_top_up`.

    Parameters
    ----------
        utility_model: UtilityModel
            Increment distribution.

        surrogate: SurrogateConfig, optional
            Surrogate weighting; ``None`` disables surrogates.
    """

    def __init__(self, utility_model: UtilityModel, surrogate: Optional[SurrogateConfig] = None):
        self.utility_model = utility_model
        self.surrogate = surrogate
        self.cache = SurrogateCache(1)

    @property
    def n_clients(self) -> int:
        return self.utility_model.n_clients

    def play(self, t: int, available: np.ndarray, chosen: np.ndarray, rng: np.random.Generator) -> RoundOutcome:
        increments = self.utility_model.draw(rng)
        credit = np.zeros(self.n_clients)
        contribution = 0.0
        missing: Tuple[int, ...] = ()
        if self.surrogate is not None:
            missing = tuple(int(k) for k in np.flatnonzero(~available) if k in self.cache)
            if missing:
                eta = reliability(self.cache.staleness(missing, t), self.surrogate)
                contribution = float(eta.sum())
                if self.surrogate.utility_credit:
                    deltas = np.array([entry.delta for entry in self.cache.entries(missing)])
                    credit[list(missing)] = eta * deltas
            for k in chosen:
                self.cache.capture(k, [increments[k]], t, delta=increments[k])
        return RoundOutcome(increments, credit, contribution, missing)

    def performance(self, ledger: ClientLedger, t: int) -> Tuple[float, np.ndarray]:
        """Cumulative utility rate ``u_k / t`` per client and its mean."""
        rates = ledger.utility / max(t, 1)
        return float(rates.mean()), rates


def make_quadratic_clients(centers: Sequence[Sequence[float]], counts: Sequence[int], spread: float,
                           curvature, rng: np.random.Generator, initial) -> List[QuadraticClient]:
    """
    Quadratic clients whose optima scatter around cluster centers.

    Cluster ``i`` holds ``counts[i]`` consecutive client ids, with optima drawn
    from an isotropic normal of standard deviation ``spread`` around
    ``centers[i]``. Every local model starts at ``initial``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    total = int(np.sum(counts))
    curvature = np.broadcast_to(np.asarray(curvature, dtype=float), (total,))
    clients = []
    for center, count in zip(centers, counts):
        optima = center + spread * rng.standard_normal((int(count), center.size))
        for optimum in optima:
            clients.append(QuadraticClient(optimum, float(curvature[len(clients)]), initial))
    return clients


class QuadraticWorkload(object):
    """
    Federated training of quadratic clients.

    Every round the chosen clients run :func:`fairfed.toyfl.local_update` from
    the global model and send the gradient at their warm-start point. Active
    clients enter the aggregate with raw weight 1; with surrogates enabled,
    every unavailable client with a cached signal enters with its reliability
    ``eta``. The sum is divided by the total raw mass before the global step.

    Utility increments follow ``signal``: ``LOCAL_REDUCTION`` is the chosen
    client's local loss reduction, ``GLOBAL_BENEFIT`` is every client's loss
    reduction under the global model over the round, clipped to ``[0, M]``.
    Missing clients are offered ``eta`` times their predicted benefit, the
    stale signal against the round's step for ``GLOBAL_BENEFIT`` or the cached
    local reduction otherwise.

    Parameters
    ----------
        clients: sequence of QuadraticClient
            The population. The workload works on its own deep copy.

        initial: array_like
            Initial global model.

        trainer: TrainerConfig
            Step size, local epochs, mixing and the utility bound.

        surrogate: SurrogateConfig, optional
            Surrogate weighting; ``None`` disables surrogates.

        signal: UtilitySignal, optional
            Utility definition. Default value is ``LOCAL_REDUCTION``.

        record_trajectory: bool, optional
            Keep a :class:`fairfed.toyfl.TrajectoryRecord` per round.
    """

    def __init__(self, clients: Sequence[QuadraticClient], initial, trainer: TrainerConfig,
                 surrogate: Optional[SurrogateConfig] = None,
                 signal: UtilitySignal = UtilitySignal.LOCAL_REDUCTION,
                 record_trajectory: bool = False):
        self.clients = copy.deepcopy(list(clients))
        self.weights = np.array(initial, dtype=float).ravel()
        if any(client.dimension != self.weights.size for client in self.clients):
            raise ConfigError("workload.initial", "dimension differs from the client optima")
        self.trainer = trainer
        self.surrogate = surrogate
        self.signal = signal
        self.objective = GlobalObjective(self.clients)
        self.cache = SurrogateCache(self.weights.size)
        self.trajectory: Optional[List[TrajectoryRecord]] = [] if record_trajectory else None
        self._initial_loss = self.objective.loss(self.weights)
        self._initial_client_loss = np.array([client.loss(self.weights) for client in self.clients])

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    def _client_losses(self, w: np.ndarray) -> np.ndarray:
        return np.array([client.loss(w) for client in self.clients])

    def play(self, t: int, available: np.ndarray, chosen: np.ndarray, rng: np.random.Generator) -> RoundOutcome:
        zeros = np.zeros(self.n_clients)
        if len(chosen) == 0:
            return RoundOutcome(zeros, zeros.copy(), 0.0)
        w = self.weights
        bound = self.trainer.utility_bound
        updates = {int(k): local_update(self.clients[k], w, self.trainer) for k in chosen}

        missing: Tuple[int, ...] = ()
        eta = np.zeros(0)
        if self.surrogate is not None:
            missing = tuple(int(k) for k in np.flatnonzero(~available) if k in self.cache)
            eta = reliability(self.cache.staleness(missing, t), self.surrogate) if missing else np.zeros(0)
        stale = [entry.signal for entry in self.cache.entries(missing)]
        fresh = [updates[k].signal for k in sorted(updates)]
        ones = np.ones(len(fresh))

        applied, contribution = aggregate_with_surrogates(fresh, ones, stale, eta, dimension=w.size)
        mass = len(fresh) + contribution
        applied = applied / mass
        w_next = global_step(w, applied, self.trainer.step_size)

        if self.trajectory is not None:
            truth = [local_update(self.clients[k], w, self.trainer).signal for k in missing]
            oracle, _ = aggregate_with_surrogates(fresh, ones, truth, eta, dimension=w.size)
            self.trajectory.append(TrajectoryRecord(w.copy(), oracle / mass, applied, self.objective.gradient(w)))

        increments = zeros.copy()
        credit = zeros.copy()
        if self.signal is UtilitySignal.GLOBAL_BENEFIT:
            increments = np.clip(self._client_losses(w) - self._client_losses(w_next), 0.0, bound)
        else:
            for k, update in updates.items():
                increments[k] = update.delta
        if missing and self.surrogate.utility_credit:
            if self.signal is UtilitySignal.GLOBAL_BENEFIT:
                predicted = np.clip(np.asarray(stale) @ (w - w_next), 0.0, bound)
            else:
                predicted = np.array([entry.delta for entry in self.cache.entries(missing)])
            credit[list(missing)] = eta * predicted

        for k, update in updates.items():
            self.clients[k].weights = update.weights
            self.cache.capture(k, update.signal, t, loss=update.loss_before, delta=update.delta)
        self.weights = w_next
        logger.debug("Round %d: %d active, %d surrogates, mass %.4g.", t, len(fresh), len(missing), contribution)
        return RoundOutcome(increments, credit, contribution, missing)

    def performance(self, ledger: ClientLedger, t: int) -> Tuple[float, np.ndarray]:
        """Relative loss reduction ``1 - f(w_t) / f(w_0)``, globally and per client."""
        overall = 1.0 - self.objective.loss(self.weights) / self._initial_loss if self._initial_loss > 0 else 1.0
        losses = self._client_losses(self.weights)
        base = self._initial_client_loss
        per_client = np.where(base > 0, 1.0 - losses / np.where(base > 0, base, 1.0), 1.0)
        return float(overall), np.clip(per_client, 0.0, 1.0)

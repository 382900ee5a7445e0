"""
Miniature federated optimization on quadratic client objectives.

Client ``k`` minimizes ``f_k(w) = (c_k / 2) |w - w_k*|^2``. Losses, gradients
and the smoothness constant of any weighted sum are exact, so the one-step
descent inequalities of surrogate-corrected aggregation can be checked
numerically round by round.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ContractViolationError, DimensionMismatchError
from .surrogate import descent_gap_bound

logger = logging.getLogger(__name__)


class QuadraticClient(object):
    """
    Client with a quadratic local objective.

    Parameters
    ----------
        optimum: array_like
            Local optimum ``w_k*``.

        curvature: float, optional
            Curvature ``c_k > 0``. Default value is 1.0.

        weights: array_like, optional
            Initial local model ``w_k``. Default value is the zero vector.

    Properties
    ----------
        optimum: numpy.ndarray
            Get the local optimum.

        curvature: float
            Get the curvature.

        weights: numpy.ndarray
            Get and set the local model.
    """

    def __init__(self, optimum, curvature: float = 1.0, weights=None):
        self._optimum = np.array(optimum, dtype=float).ravel()
        if not curvature > 0:
            raise ValueError("Curvature must be positive.")
        self._curvature = float(curvature)
        self._weights = np.zeros_like(self._optimum)
        if weights is not None:
            self.weights = weights

    @property
    def optimum(self) -> np.ndarray:
        return self._optimum

    @property
    def curvature(self) -> float:
        return self._curvature

    @property
    def dimension(self) -> int:
        return self._optimum.size

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @weights.setter
    def weights(self, weights):
        weights = np.array(weights, dtype=float).ravel()
        if weights.size != self.dimension:
            raise DimensionMismatchError(f"Expected a model of dimension {self.dimension}, got {weights.size}.")
        self._weights = weights

    def loss(self, w=None) -> float:
        w = self._weights if w is None else np.asarray(w, dtype=float)
        diff = w - self._optimum
        return 0.5 * self._curvature * float(diff @ diff)

    def gradient(self, w=None) -> np.ndarray:
        w = self._weights if w is None else np.asarray(w, dtype=float)
        return self._curvature * (w - self._optimum)

    def __repr__(self) -> str:
        return f"QuadraticClient(dimension={self.dimension}, curvature={self._curvature})"


@dataclass(frozen=True)
class TrainerConfig:
    """
    Local training and server step parameters.

    Attributes
    ----------
        step_size: float
            Step size ``gamma > 0``, shared by local and global steps.

        local_epochs: int
            Full-gradient local steps ``E >= 1``.

        mixing: float
            Weight ``alpha`` of the global model in the warm start, in [0, 1].

        angle: float
            Descent-angle constant ``c`` in (0, 1].

        utility_bound: float
            Upper clip ``M`` of the loss reduction.
    """
    step_size: float = 0.1
    local_epochs: int = 1
    mixing: float = 1.0
    angle: float = 0.5
    utility_bound: float = math.inf

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("The step size must be positive.")
        if self.local_epochs < 1:
            raise ValueError("At least one local epoch is required.")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("The mixing factor must lie in [0, 1].")
        if not 0.0 < self.angle <= 1.0:
            raise ValueError("The angle constant must lie in (0, 1].")
        if not self.utility_bound > 0:
            raise ValueError("The utility bound must be positive.")


class LocalUpdate(NamedTuple):
    weights: np.ndarray
    delta: float
    signal: np.ndarray
    loss_before: float
    loss_after: float


def local_update(client: QuadraticClient, global_weights, cfg: TrainerConfig) -> LocalUpdate:
    """
    Warm-started local training of one client.

    The local model is first interpolated towards the global one,
    ``w_k <- (1 - alpha) w_k + alpha w``, then ``E`` gradient steps are taken.
    The client itself is not modified.

    Parameters
    ----------
        client: QuadraticClient
            The client and its current local model.

        global_weights: array_like
            Global model ``w^(t)``.

        cfg: TrainerConfig
            Training parameters.

    Returns
    -------
        update: LocalUpdate
            New local model, loss reduction clipped to ``[0, M]``, and the
            gradient at the warm-start point as the transmitted signal.

    .. note::

        A ``RuntimeWarning`` is emitted when ``gamma * c_k >= 2``, since local
        descent then diverges.
    """
    global_weights = np.asarray(global_weights, dtype=float).ravel()
    if global_weights.size != client.dimension:
        raise DimensionMismatchError(
            f"Global model has dimension {global_weights.size}, client {client.dimension}.")
    if cfg.step_size * client.curvature >= 2.0:
        warnings.warn(
            f"Step size {cfg.step_size} with curvature {client.curvature} exceeds the stability bound.",
            RuntimeWarning, stacklevel=2)
    w = (1.0 - cfg.mixing) * client.weights + cfg.mixing * global_weights
    signal = client.gradient(w)
    before = client.loss(w)
    for _ in range(cfg.local_epochs):
        w = w - cfg.step_size * client.gradient(w)
    after = client.loss(w)
    delta = min(max(before - after, 0.0), cfg.utility_bound)
    return LocalUpdate(weights=w, delta=delta, signal=signal, loss_before=before, loss_after=after)


def global_step(weights, aggregate, step_size: float) -> np.ndarray:
    """Server update ``w - gamma * G``."""
    weights = np.asarray(weights, dtype=float)
    aggregate = np.asarray(aggregate, dtype=float)
    if weights.shape != aggregate.shape:
        raise DimensionMismatchError(f"Model shape {weights.shape} and aggregate shape {aggregate.shape} differ.")
    return weights - step_size * aggregate


class GlobalObjective(object):
    """
    Weighted sum ``f(w) = sum_k beta_k f_k(w)`` of quadratic clients.

    Parameters
    ----------
        clients: sequence of QuadraticClient

        weights: array_like, optional
            Non-negative ``beta_k``. Default value is uniform ``1 / N``.
    """

    def __init__(self, clients: Sequence[QuadraticClient], weights=None):
        if not clients:
            raise ContractViolationError("An objective needs at least one client.")
        self._clients = list(clients)
        n = len(self._clients)
        self._beta = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).ravel()
        if self._beta.size != n or np.any(self._beta < 0):
            raise ContractViolationError("Objective weights must be non-negative, one per client.")
        self._optima = np.stack([client.optimum for client in self._clients])
        self._curvatures = np.array([client.curvature for client in self._clients])

    @property
    def beta(self) -> np.ndarray:
        return self._beta

    @property
    def smoothness(self) -> float:
        """``L = sum_k beta_k c_k``, exact for isotropic quadratics."""
        return float(self._beta @ self._curvatures)

    @property
    def minimizer(self) -> np.ndarray:
        scale = self._beta * self._curvatures
        return scale @ self._optima / scale.sum()

    def loss(self, w) -> float:
        diff = np.asarray(w, dtype=float) - self._optima
        return float(0.5 * np.sum(self._beta * self._curvatures * np.einsum("ij,ij->i", diff, diff)))

    def gradient(self, w) -> np.ndarray:
        diff = np.asarray(w, dtype=float) - self._optima
        return (self._beta * self._curvatures) @ diff


@dataclass(frozen=True)
class TrajectoryRecord:
    """
    One server round as seen by an oracle.

    Attributes
    ----------
        weights: numpy.ndarray
            Global model ``w_t``.

        aggregate: numpy.ndarray
            Aggregate ``G_t`` built from true current signals.

        surrogate_aggregate: numpy.ndarray
            Aggregate ``G~_t`` actually applied, with surrogates.

        gradient: numpy.ndarray
            Gradient of the global objective at ``w_t``.
    """
    weights: np.ndarray
    aggregate: np.ndarray
    surrogate_aggregate: np.ndarray
    gradient: np.ndarray


@dataclass(frozen=True)
class DescentReport:
    """
    Outcome of :func:`verify_descent_bounds`.

    Descent slacks are only collected on rounds satisfying the angle condition;
    gap slacks on every round. A slack below ``-tolerance`` is a violation.
    """
    rounds: int
    angle_failures: int
    descent_violations: int
    gap_violations: int
    min_descent_slack: float
    min_gap_slack: float

    @property
    def rounds_checked(self) -> int:
        return self.rounds - self.angle_failures

    @property
    def ok(self) -> bool:
        return self.descent_violations == 0 and self.gap_violations == 0


def verify_descent_bounds(trajectory: Sequence[TrajectoryRecord], objective: GlobalObjective,
                          cfg: TrainerConfig, tolerance: float = 1e-9) -> DescentReport:
    """
    Check the one-step progress inequalities along a trajectory.

    For every round the gap ``|f(w - gamma G~) - f(w - gamma G)|`` must not
    exceed :func:`fairfed.surrogate.descent_gap_bound`. On rounds where
    ``<grad f, G~> >= c |grad f| |G~|`` the progress bound
    ``f(w - gamma G~) <= f(w) - gamma c |grad f| |G~| + (L gamma^2 / 2) |G~|^2``
    must hold as well.

    Returns
    -------
        report: DescentReport
            Violations are counted, never raised.
    """
    gamma, angle, smoothness = cfg.step_size, cfg.angle, objective.smoothness
    angle_failures = descent_violations = gap_violations = 0
    descent_slacks: List[float] = []
    gap_slacks: List[float] = []
    for record in trajectory:
        w = record.weights
        grad_norm = float(np.linalg.norm(record.gradient))
        applied_norm = float(np.linalg.norm(record.surrogate_aggregate))
        bias_norm = float(np.linalg.norm(record.surrogate_aggregate - record.aggregate))
        here = objective.loss(w)
        applied = objective.loss(global_step(w, record.surrogate_aggregate, gamma))
        oracle = objective.loss(global_step(w, record.aggregate, gamma))
        scale = max(1.0, abs(here))

        gap_bound = descent_gap_bound(gamma, smoothness, grad_norm,
                                      float(np.linalg.norm(record.aggregate)), bias_norm)
        gap_slack = gap_bound - abs(applied - oracle)
        gap_slacks.append(gap_slack)
        if gap_slack < -tolerance * scale:
            gap_violations += 1

        if float(record.gradient @ record.surrogate_aggregate) < angle * grad_norm * applied_norm:
            angle_failures += 1
            continue
        progress = here - gamma * angle * grad_norm * applied_norm + 0.5 * smoothness * gamma ** 2 * applied_norm ** 2
        descent_slack = progress - applied
        descent_slacks.append(descent_slack)
        if descent_slack < -tolerance * scale:
            descent_violations += 1

    if descent_violations or gap_violations:
        logger.warning("Descent bounds violated: %d progress, %d gap.", descent_violations, gap_violations)
    return DescentReport(
        rounds=len(trajectory),
        angle_failures=angle_failures,
        descent_violations=descent_violations,
        gap_violations=gap_violations,
        min_descent_slack=min(descent_slacks) if descent_slacks else math.inf,
        min_gap_slack=min(gap_slacks) if gap_slacks else math.inf,
    )

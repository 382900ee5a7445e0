"""
Surrogate contributions for clients that miss a round.

The server caches the last signal each client transmitted. When the client is
unavailable, the cached signal enters the aggregate with a reliability weight
that decays exponentially with its staleness.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolationError, DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurrogateEntry:
    """
    Cached signal of one client.

    Attributes
    ----------
        client_id: int
            Owner of the signal.

        signal: numpy.ndarray
            Last transmitted gradient-like vector.

        captured_at: int
            Round ``tau_k`` at which it was transmitted.

        loss: float
            Local loss reported with the signal.

        delta: float
            Utility increment the client earned that round.
    """
    client_id: int
    signal: np.ndarray
    captured_at: int
    loss: float = 0.0
    delta: float = 0.0

    def staleness(self, t: int) -> int:
        if t <= self.captured_at:
            raise ContractViolationError(
                f"Surrogate of client {self.client_id} captured at round {self.captured_at} used at round {t}.")
        return t - self.captured_at


@dataclass(frozen=True)
class SurrogateConfig:
    """
    Reliability weighting of stale signals.

    ``eta0`` scales the weight, ``decay`` is the exponential rate in rounds and
    ``epsilon`` the assumed uniform error of a surrogate. With ``utility_credit``
    missing clients also receive a down-weighted utility credit.
    """
    eta0: float = 1.0
    decay: float = 0.5
    epsilon: float = 0.1
    utility_credit: bool = True

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive.")
        if self.decay < 0:
            raise ValueError("The decay rate must be non-negative.")
        if self.epsilon < 0:
            raise ValueError("The surrogate error bound must be non-negative.")


def reliability(delta, cfg: SurrogateConfig):
    """
    Reliability factor ``eta0 * exp(-decay * delta)``.

    Parameters
    ----------
        delta: int or array_like
            Staleness in rounds, at least 1.

        cfg: SurrogateConfig

    Returns
    -------
        eta: float or numpy.ndarray
    """
    delta_array = np.asarray(delta, dtype=float)
    if np.any(delta_array < 1):
        raise ContractViolationError("Staleness is at least one round.")
    eta = cfg.eta0 * np.exp(-cfg.decay * delta_array)
    return float(eta) if eta.ndim == 0 else eta


class SurrogateCache(object):
    """
    Last-seen signal of every client that ever participated.

    Parameters
    ----------
        dimension: int
            Signal dimension d.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("Signals have at least one dimension.")
        self._dimension = int(dimension)
        self._entries: Dict[int, SurrogateEntry] = {}

    @property
    def dimension(self) -> int:
        return self._dimension

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, client_id: int) -> bool:
        return int(client_id) in self._entries

    def __iter__(self) -> Iterator[SurrogateEntry]:
        return iter(self._entries[k] for k in sorted(self._entries))

    def capture(self, client_id: int, signal, t: int, loss: float = 0.0, delta: float = 0.0) -> SurrogateEntry:
        """Store the signal a client transmitted at round ``t``."""
        signal = np.array(signal, dtype=float).ravel()
        if signal.size != self._dimension:
            raise DimensionMismatchError(
                f"Signal of client {client_id} has dimension {signal.size}, expected {self._dimension}.")
        entry = SurrogateEntry(int(client_id), signal, int(t), float(loss), float(delta))
        self._entries[int(client_id)] = entry
        return entry

    def get(self, client_id: int) -> Optional[SurrogateEntry]:
        return self._entries.get(int(client_id))

    def entries(self, clients: Sequence[int]) -> List[SurrogateEntry]:
        """Cached entries of ``clients``, skipping those never seen, in the given order."""
        return [self._entries[int(k)] for k in clients if int(k) in self._entries]

    def staleness(self, clients: Sequence[int], t: int) -> np.ndarray:
        return np.array([entry.staleness(t) for entry in self.entries(clients)], dtype=np.int64)

    def clear(self) -> None:
        self._entries.clear()


def _as_signals(signals, dimension: Optional[int]) -> np.ndarray:
    signals = np.asarray(signals, dtype=float)
    if signals.size == 0:
        return np.zeros((0, dimension or 0))
    return np.atleast_2d(signals)


def aggregate_with_surrogates(active_signals, active_weights, surrogate_signals, surrogate_weights,
                              dimension: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """
    Surrogate-corrected aggregate.

    Parameters
    ----------
        active_signals: array_like
            Fresh signals of participating clients, shape (n, d).

        active_weights: array_like
            Their weights ``beta_k``.

        surrogate_signals: array_like
            Cached signals of missing clients, shape (m, d).

        surrogate_weights: array_like
            Their weights ``beta_k'``.

        dimension: int, optional
            Signal dimension, needed only when both sets are empty.

    Returns
    -------
        aggregate: numpy.ndarray
            ``sum beta_k F_k + sum beta_k' F~_k'``.

        contribution: float
            Surrogate weight mass ``sum beta_k'``.

    Raises
    ------
        DimensionMismatchError: If signal dimensions or weight counts disagree.
    """
    active = _as_signals(active_signals, dimension)
    stale = _as_signals(surrogate_signals, dimension)
    active_weights = np.asarray(active_weights, dtype=float).ravel()
    surrogate_weights = np.asarray(surrogate_weights, dtype=float).ravel()
    if active.shape[0] and stale.shape[0] and active.shape[1] != stale.shape[1]:
        raise DimensionMismatchError(
            f"Active signals have dimension {active.shape[1]}, surrogates {stale.shape[1]}.")
    if active_weights.size != active.shape[0] or surrogate_weights.size != stale.shape[0]:
        raise DimensionMismatchError("Each signal needs exactly one weight.")
    if np.any(active_weights < 0) or np.any(surrogate_weights < 0):
        raise ContractViolationError("Aggregation weights must be non-negative.")
    width = active.shape[1] if active.shape[0] else stale.shape[1]
    if dimension is not None and width not in (0, dimension):
        raise DimensionMismatchError(f"Signals have dimension {width}, expected {dimension}.")
    width = width or (dimension or 0)
    aggregate = np.zeros(width)
    if active.shape[0]:
        aggregate += active_weights @ active
    if stale.shape[0]:
        aggregate += surrogate_weights @ stale
    return aggregate, float(surrogate_weights.sum())


@dataclass(frozen=True)
class BiasReport:
    """Norm of the surrogate bias and its two bounds."""
    norm: float
    deterministic_bound: float
    exponential_bound: Optional[float] = None

    def holds(self, tolerance: float = 1e-12) -> bool:
        return self.norm <= self.deterministic_bound + tolerance


def exponential_bias_bound(staleness, cfg: SurrogateConfig) -> float:
    """``epsilon * eta0 * sum exp(-decay * delta)`` over the missing clients."""
    staleness = np.asarray(staleness, dtype=float).ravel()
    if staleness.size == 0:
        return 0.0
    return float(cfg.epsilon * np.sum(reliability(staleness, cfg)))


def bias_and_bound(true_signals, surrogate_signals, weights, cfg: SurrogateConfig,
                   staleness=None) -> BiasReport:
    """
    Bias introduced by surrogates and its bounds.

    The bias is ``sum beta_k' (F~_k' - F_k')``. The deterministic bound is
    ``epsilon * sum beta_k'``; the exponential bound is computed from
    ``staleness`` when given.
    """
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size == 0:
        return BiasReport(0.0, 0.0, None if staleness is None else 0.0)
    truth = np.atleast_2d(np.asarray(true_signals, dtype=float))
    stale = np.atleast_2d(np.asarray(surrogate_signals, dtype=float))
    if truth.shape != stale.shape:
        raise DimensionMismatchError("True and surrogate signals must have the same shape.")
    if weights.size != truth.shape[0]:
        raise DimensionMismatchError("Each missing client needs exactly one weight.")
    bias = weights @ (stale - truth)
    return BiasReport(
        norm=float(np.linalg.norm(bias)),
        deterministic_bound=float(cfg.epsilon * weights.sum()),
        exponential_bound=None if staleness is None else exponential_bias_bound(staleness, cfg),
    )


def descent_gap_bound(gamma: float, smoothness: float, grad_norm: float,
                      agg_norm: float, bias_norm: float) -> float:
    """
    Bound on ``|f(w - gamma G~) - f(w - gamma G)|``.

    Returns ``gamma |grad| |bias| + L gamma^2 |G| |bias| + (L gamma^2 / 2) |bias|^2``.
    """
    if gamma <= 0 or smoothness <= 0:
        raise ContractViolationError("Step size and smoothness must be positive.")
    if min(grad_norm, agg_norm, bias_norm) < 0:
        raise ContractViolationError("Norms are non-negative.")
    curvature = smoothness * gamma ** 2
    return gamma * grad_norm * bias_norm + curvature * agg_norm * bias_norm + 0.5 * curvature * bias_norm ** 2

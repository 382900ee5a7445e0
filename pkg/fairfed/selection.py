"""
Client selection policies and their long-run behaviour.

A policy turns availability estimates, missed counts and (optionally) the
normalized utilities into raw weights; :func:`select` then draws the round's
participants among the available clients only.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ContractViolationError, DegenerateLimitError, EmptySelectionError

logger = logging.getLogger(__name__)


class PolicyKind(Enum):
    RANDOM = "random"
    INVERSE_AVAILABILITY = "inverse_availability"
    REACTIVE_REWEIGHT = "reactive_reweight"
    UTILITY_COMPENSATED = "utility_compensated"


class SamplingMode(Enum):
    SAMPLE_PROPORTIONAL = "sample_proportional"
    TOP_K = "top_k"
    INCLUSION_PROPORTIONAL = "inclusion_proportional"


class MissedCounter(Enum):
    UNAVAILABLE = "unavailable"
    UNSELECTED = "unselected"


@dataclass(frozen=True)
class SelectionPolicy:
    """
    Configuration of a client-selection policy.

    Attributes
    ----------
        kind: PolicyKind
            Weighting rule.

        m: int
            Clients per round.

        mode: SamplingMode
            How weights turn into a chosen set. ``RANDOM`` ignores it and
            always samples uniformly.

        alpha: float or tuple of float
            Per-client base priorities of the reactive rule, all positive.

        lam: float
            Missed-round amplification ``lambda >= 0``.

        epsilon: float
            Additive shift of the availability in the reactive weight, and
            smoothing constant of the utility-compensated weight.

        missed_counter: MissedCounter
            Which counter feeds the reactive weight.
    """
    kind: PolicyKind = PolicyKind.INVERSE_AVAILABILITY
    m: int = 1
    mode: SamplingMode = SamplingMode.SAMPLE_PROPORTIONAL
    alpha: Union[float, Tuple[float, ...]] = 1.0
    lam: float = 0.0
    epsilon: float = 0.01
    missed_counter: MissedCounter = MissedCounter.UNAVAILABLE

    def __post_init__(self):
        if not isinstance(self.kind, PolicyKind):
            raise TypeError("Parameter kind must be a PolicyKind.")
        if not isinstance(self.mode, SamplingMode):
            raise TypeError("Parameter mode must be a SamplingMode.")
        if not isinstance(self.missed_counter, MissedCounter):
            raise TypeError("Parameter missed_counter must be a MissedCounter.")
        if self.m < 1:
            raise ValueError("A policy selects at least one client per round.")
        if np.any(np.asarray(self.alpha, dtype=float) <= 0):
            raise ValueError("Every alpha must be positive.")
        if self.lam < 0:
            raise ValueError("Lambda must be non-negative.")
        if self.epsilon <= 0:
            raise ValueError("Epsilon must be positive.")


def weights(policy: SelectionPolicy, pi_hat, missed, normalized_utility=None) -> np.ndarray:
    """
    Raw selection weight of every client.

    Parameters
    ----------
        policy: SelectionPolicy
            The policy.

        pi_hat: array_like
            Availability estimates, each at least the estimator floor.

        missed: array_like
            Missed counts, as chosen by ``policy.missed_counter``.

        normalized_utility: array_like, optional
            Estimated-pi normalized utilities, required by ``UTILITY_COMPENSATED``.

    Returns
    -------
        weights: numpy.ndarray
            Strictly positive raw weights.

    .. note::

        ``RANDOM`` gives all ones, ``INVERSE_AVAILABILITY`` gives ``1 / pi_hat``,
        ``REACTIVE_REWEIGHT`` gives ``alpha / (pi_hat + eps) * (1 + lambda * missed)``
        and ``UTILITY_COMPENSATED`` gives ``(mean + eps) / (u_tilde + eps)``.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    if np.any(pi_hat <= 0):
        raise ContractViolationError("Availability estimates must be positive.")
    kind = policy.kind
    if kind is PolicyKind.RANDOM:
        return np.ones_like(pi_hat)
    if kind is PolicyKind.INVERSE_AVAILABILITY:
        return 1.0 / pi_hat
    if kind is PolicyKind.REACTIVE_REWEIGHT:
        alpha = np.asarray(policy.alpha, dtype=float)
        missed = np.asarray(missed, dtype=float)
        return alpha / (pi_hat + policy.epsilon) * (1.0 + policy.lam * missed)
    if normalized_utility is None:
        raise ContractViolationError("Utility-compensated weights need the normalized utilities.")
    normalized_utility = np.asarray(normalized_utility, dtype=float)
    return (normalized_utility.mean() + policy.epsilon) / (normalized_utility + policy.epsilon)


def normalize(raw) -> np.ndarray:
    """
    Normalize raw weights into a probability vector.

    Raises
    ------
        EmptySelectionError: If the set is empty or carries no positive weight.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise EmptySelectionError("Cannot normalize an empty weight set.")
    if np.any(raw < 0):
        raise ContractViolationError("Weights must be non-negative.")
    total = raw.sum()
    if total <= 0:
        raise EmptySelectionError("Cannot normalize weights that are all zero.")
    return raw / total


def inclusion_probabilities(raw, k: int) -> np.ndarray:
    """
    Inclusion probabilities ``min(1, c * w_k)`` summing to ``k``.

    Clients whose proportional share exceeds one are capped at one and the
    remaining budget is spread over the others, repeatedly.
    """
    raw = np.asarray(raw, dtype=float)
    if not 0 <= k <= raw.size:
        raise ContractViolationError(f"Cannot include {k} of {raw.size} clients.")
    probabilities = np.zeros_like(raw)
    capped = np.zeros(raw.size, dtype=bool)
    while True:
        free = ~capped
        budget = k - capped.sum()
        probabilities[capped] = 1.0
        if budget <= 0 or not free.any():
            probabilities[free] = 0.0
            break
        probabilities[free] = budget * raw[free] / raw[free].sum()
        over = free & (probabilities > 1.0)
        if not over.any():
            break
        capped |= over
    return np.minimum(probabilities, 1.0)


def _systematic(probabilities: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    totals = np.cumsum(probabilities)
    totals[-1] = k
    points = rng.random() + np.arange(k)
    picks = np.unique(np.minimum(np.searchsorted(totals, points, side="right"), probabilities.size - 1))
    if picks.size < k:
        rest = np.setdiff1d(np.arange(probabilities.size), picks)
        rest = rest[np.argsort(-probabilities[rest], kind="stable")]
        picks = np.concatenate([picks, rest[:k - picks.size]])
    return picks


def _sequential(raw: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    remaining = np.arange(raw.size)
    left = raw.copy()
    picks = []
    for _ in range(k):
        totals = np.cumsum(left)
        index = int(np.searchsorted(totals, rng.random() * totals[-1], side="right"))
        index = min(index, left.size - 1)
        picks.append(remaining[index])
        remaining = np.delete(remaining, index)
        left = np.delete(left, index)
    return np.asarray(picks, dtype=np.int64)


def select(policy: SelectionPolicy, available, raw, rng: np.random.Generator) -> np.ndarray:
    """
    Choose the participants of a round.

    Parameters
    ----------
        policy: SelectionPolicy
            The policy; its ``m`` caps the number of participants.

        available: array_like
            Boolean availability mask of length N, or the ids of the available
            clients.

        raw: array_like
            Raw weights of all N clients, indexed by client id.

        rng: numpy.random.Generator
            Source of randomness.

    Returns
    -------
        chosen: numpy.ndarray
            Sorted ids of ``min(m, |available|)`` available clients. Empty when
            nobody is available.
    """
    available = np.asarray(available)
    ids = np.flatnonzero(available) if available.dtype == bool else np.unique(available.astype(np.int64))
    if ids.size == 0:
        logger.debug("No client available, nothing to select.")
        return ids.astype(np.int64)
    k = min(policy.m, ids.size)
    local = np.asarray(raw, dtype=float)[ids]
    if policy.kind is PolicyKind.RANDOM:
        chosen = rng.choice(ids, size=k, replace=False)
    elif policy.mode is SamplingMode.TOP_K:
        chosen = ids[np.lexsort((ids, -local))[:k]]
    elif policy.mode is SamplingMode.SAMPLE_PROPORTIONAL:
        chosen = ids[_sequential(normalize(local), k, rng)]
    else:
        chosen = ids[_systematic(inclusion_probabilities(local, k), k, rng)]
    return np.sort(chosen).astype(np.int64)


def asymptotic_weight_limit(pi, alpha=1.0, lam: float = 0.0, epsilon: float = 0.0) -> np.ndarray:
    """
    Long-run normalized reactive weights under stationary availability.

    With ``lambda > 0`` the missed count grows like ``(1 - pi_k) t`` and
    dominates, so the limit is proportional to ``alpha_k (1 - pi_k) / (pi_k + eps)``.
    With ``lambda = 0`` it is proportional to ``alpha_k / (pi_k + eps)``.

    Raises
    ------
        DegenerateLimitError: If ``lambda > 0`` and every client is always available.
    """
    pi = np.asarray(pi, dtype=float)
    base = np.asarray(alpha, dtype=float) / (pi + epsilon)
    if lam > 0:
        base = base * (1.0 - pi)
        if base.sum() <= 0:
            raise DegenerateLimitError("Every client is always available; the reactive limit is undefined.")
    return normalize(np.broadcast_to(base, pi.shape))


def empirical_reactive_weights(pi, alpha=1.0, lam: float = 0.0, epsilon: float = 0.01,
                               rounds: int = 10_000, rng: Optional[np.random.Generator] = None,
                               estimated: bool = False, floor: float = 0.01) -> np.ndarray:
    """
    Normalized reactive weights after ``rounds`` rounds of Bernoulli availability.

    The missed counts are simulated. The weights use the true availabilities,
    or running-mean estimates when ``estimated`` is set.
    """
    rng = np.random.default_rng() if rng is None else rng
    pi = np.asarray(pi, dtype=float)
    available = rng.random((rounds, pi.size)) < pi
    missed = (~available).sum(axis=0)
    pi_hat = np.clip(available.mean(axis=0), floor, 1.0) if estimated else pi
    raw = np.asarray(alpha, dtype=float) / (pi_hat + epsilon) * (1.0 + lam * missed)
    return normalize(raw)


@dataclass(frozen=True)
class SelectionStats:
    """Selection frequencies ``S_k / T`` and their distance to ``m / N``."""
    frequency: np.ndarray
    deviation: np.ndarray
    std: float

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max()) if self.deviation.size else 0.0


def selection_stats(counts, rounds: int, m: int, n_clients: Optional[int] = None) -> SelectionStats:
    """
    Long-run selection statistics.

    Parameters
    ----------
        counts: array_like
            Selection counts ``S_k``.

        rounds: int
            Horizon T (>= 1).

        m: int
            Clients per round.

        n_clients: int, optional
            Population size; defaults to ``len(counts)``.
    """
    if rounds < 1:
        raise ContractViolationError("Selection statistics need at least one round.")
    counts = np.asarray(counts, dtype=float)
    n_clients = counts.size if n_clients is None else n_clients
    frequency = counts / rounds
    return SelectionStats(
        frequency=frequency,
        deviation=np.abs(frequency - m / n_clients),
        std=float(np.std(frequency)),
    )

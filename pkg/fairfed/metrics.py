"""
Fairness metrics over performance, normalized utilities and selection counts.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import ContractViolationError, UndefinedInputError

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "round", "arm", "performance", "fairness_variance", "jain_perf", "jain_utility", "utility_cv",
    "selgap_paper", "selgap_share", "gini", "surrogate_contribution", "n_available",
)


class GapVariant(Enum):
    ROUND_AVERAGE = "round_average"
    FREQUENCY_SHARE = "frequency_share"


def _vector(values) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise UndefinedInputError("Metrics need at least one value.")
    return values


def jain(values, warn: bool = True) -> float:
    """
    Jain's fairness index ``(sum v)^2 / (N sum v^2)``.

    It ranges from ``1 / N`` (one client holds everything) to 1 (equality).
    An all-zero vector is treated as perfectly equal and returns 1.
    """
    values = _vector(values)
    if np.any(values < 0):
        raise ContractViolationError("Jain's index is defined for non-negative values.")
    squares = float(values @ values)
    if squares == 0.0:
        if warn:
            logger.warning("Jain's index of an all-zero vector; returning 1.")
        return 1.0
    return float(values.sum() ** 2 / (values.size * squares))


def utility_cv(normalized, epsilon_cv: float = 1e-8) -> float:
    """Coefficient of variation ``std / (mean + epsilon_cv)``, population std."""
    normalized = _vector(normalized)
    return float(np.std(normalized) / (normalized.mean() + epsilon_cv))


def selection_gap(counts, m: int, rounds: int, n_clients: Optional[int] = None,
                  variant: GapVariant = GapVariant.FREQUENCY_SHARE) -> float:
    """
    l1 distance of the selection counts to the uniform share.

    ``ROUND_AVERAGE`` is ``(1/T) sum |S_k / m - T / N|``; ``FREQUENCY_SHARE`` is
    the dimensionless ``sum |S_k / (m T) - 1 / N|``.
    """
    if rounds < 1 or m < 1:
        raise ContractViolationError("The selection gap needs T >= 1 and m >= 1.")
    counts = _vector(counts)
    n_clients = counts.size if n_clients is None else n_clients
    if variant is GapVariant.ROUND_AVERAGE:
        return float(np.sum(np.abs(counts / m - rounds / n_clients)) / rounds)
    return float(np.sum(np.abs(counts / (m * rounds) - 1.0 / n_clients)))


def gini(counts) -> float:
    """
    Gini coefficient, in ``[0, 1 - 1/N]``.

    Raises
    ------
        UndefinedInputError: If every count is zero.
    """
    counts = np.sort(_vector(counts))
    if np.any(counts < 0):
        raise ContractViolationError("The Gini coefficient is defined for non-negative values.")
    total = counts.sum()
    if total <= 0:
        raise UndefinedInputError("The Gini coefficient of an all-zero vector is undefined.")
    n = counts.size
    ranks = np.arange(1, n + 1)
    return float(max(0.0, 2.0 * (ranks @ counts) / (n * total) - (n + 1) / n))


@dataclass(frozen=True)
class MetricsRow:
    """One row of ``metrics_log.csv``, plus the in-memory ``max_deviation``."""
    round: int
    arm: str
    performance: float
    fairness_variance: float
    jain_perf: float
    jain_utility: float
    utility_cv: float
    selgap_paper: float
    selgap_share: float
    gini: float
    surrogate_contribution: float
    n_available: int
    max_deviation: float = 0.0

    def csv_fields(self) -> List[str]:
        record = asdict(self)
        fields = []
        for name in CSV_HEADER:
            value = record[name]
            fields.append(f"{value:.6g}" if isinstance(value, float) else str(value))
        return fields


def compute_row(t: int, arm: str, performance: float, client_performance, normalized,
                counts, m: int, surrogate_contribution: float = 0.0, n_available: int = 0,
                epsilon_cv: float = 1e-8) -> MetricsRow:
    """
    Assemble the metrics of one arm at round ``t``.

    Parameters
    ----------
        t: int
            Round index.

        arm: str
            ``fair`` or ``vanilla``.

        performance: float
            Mean performance of the arm.

        client_performance: array_like
            Per-client performance, non-negative.

        normalized: array_like
            Normalized utilities.

        counts: array_like
            Selection counts so far.

        m: int
            Clients per round.

    The moments of the normalized utilities are computed once and shared by
    the fairness variance, Jain's index and the CV.

    .. note::

        Before any selection the Gini coefficient is reported as 0.
    """
    normalized = _vector(normalized)
    counts = np.asarray(counts, dtype=float)
    n = normalized.size
    total = normalized.sum()
    mean = total / n
    centered = normalized - mean
    variance = float(centered @ centered) / n
    squares = float(normalized @ normalized)
    return MetricsRow(
        round=int(t),
        arm=arm,
        performance=float(performance),
        fairness_variance=variance,
        jain_perf=jain(client_performance, warn=False),
        jain_utility=float(total ** 2 / (n * squares)) if squares > 0 else 1.0,
        utility_cv=float(np.sqrt(variance) / (mean + epsilon_cv)),
        selgap_paper=selection_gap(counts, m, t, variant=GapVariant.ROUND_AVERAGE),
        selgap_share=selection_gap(counts, m, t, variant=GapVariant.FREQUENCY_SHARE),
        gini=gini(counts) if counts.sum() > 0 else 0.0,
        surrogate_contribution=float(surrogate_contribution),
        n_available=int(n_available),
        max_deviation=float(np.abs(centered).max()),
    )

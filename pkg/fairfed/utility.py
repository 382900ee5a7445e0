"""
Cumulative utility bookkeeping and availability-normalized parity.

Every client accrues a utility increment ``delta_k(t)`` on rounds where the
accrual rule fires. Fairness is measured on the availability-normalized
utilities ``u_k / pi_k``.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolationError, UndefinedInputError

logger = logging.getLogger(__name__)


class AccrualMode(Enum):
    AVAILABILITY_ONLY = "availability_only"
    SELECTED_AND_AVAILABLE = "selected_and_available"


class NormalizationSource(Enum):
    TRUE_PI = "true_pi"
    ESTIMATED_PI = "estimated_pi"


class NoiseKind(Enum):
    CONSTANT = "constant"
    UNIFORM_BOUNDED = "uniform_bounded"
    LOSS_DELTA = "loss_delta"


@dataclass(frozen=True)
class ClientState:
    """
    Ledger entry of one client.

    Attributes
    ----------
        client_id: int
            Index of the client in the population.

        utility: float
            Cumulative utility ``u_k``.

        missed: int
            Rounds during which the client was unavailable.

        selected: int
            Selection count ``S_k``.

        available_rounds: int
            Rounds during which the client was available.

        last_participation: int or None
            Last round the client was selected.

        pi_hat: float
            Current availability estimate.
    """
    client_id: int
    utility: float = 0.0
    missed: int = 0
    selected: int = 0
    available_rounds: int = 0
    last_participation: Optional[int] = None
    pi_hat: float = 1.0

    def __post_init__(self):
        if self.missed < 0 or self.selected < 0 or self.available_rounds < 0:
            raise ValueError("Counts of a client state must be non-negative.")
        if self.selected > self.available_rounds:
            raise ValueError("A client cannot be selected more often than it was available.")

    @property
    def rounds_observed(self) -> int:
        return self.missed + self.available_rounds


def accrue(state: ClientState, available: bool, selected: bool, delta: float,
           mode: AccrualMode = AccrualMode.SELECTED_AND_AVAILABLE,
           t: Optional[int] = None) -> ClientState:
    """
    Advance a client state by one round.

    Parameters
    ----------
        state: ClientState
            State before the round.

        available: bool
            Availability indicator ``A_k(t)``.

        selected: bool
            Selection indicator ``S_k(t)``.

        delta: float
            Utility increment of the round, non-negative.

        mode: AccrualMode, optional
            ``AVAILABILITY_ONLY`` adds ``A_k * delta``, ``SELECTED_AND_AVAILABLE``
            adds ``A_k * S_k * delta``. Default value is ``SELECTED_AND_AVAILABLE``.

        t: int, optional
            Round index, recorded as the last participation round when selected.

    Returns
    -------
        state: ClientState
            The updated state.

    Raises
    ------
        ContractViolationError: If the client is selected while unavailable,
            or the increment is negative.
    """
    if selected and not available:
        raise ContractViolationError(f"Client {state.client_id} was selected while unavailable.")
    if delta < 0:
        raise ContractViolationError(f"Utility increments must be non-negative, got {delta}.")
    fires = available and (selected or mode is AccrualMode.AVAILABILITY_ONLY)
    return replace(
        state,
        utility=state.utility + (delta if fires else 0.0),
        missed=state.missed + (0 if available else 1),
        available_rounds=state.available_rounds + (1 if available else 0),
        selected=state.selected + (1 if selected else 0),
        last_participation=t if selected and t is not None else state.last_participation,
    )


class ClientLedger(object):
    """
    Vectorized ledger of a whole population.

    It holds the same quantities as a list of :class:`ClientState` and is what
    the engine mutates round after round. Two missed counters are kept:
    ``missed`` counts unavailable rounds and ``since_selected`` counts rounds
    since the last selection.

    Parameters
    ----------
        n_clients: int
            Population size N.

        mode: AccrualMode, optional
            Accrual rule. Default value is ``SELECTED_AND_AVAILABLE``.
    """

    def __init__(self, n_clients: int, mode: AccrualMode = AccrualMode.SELECTED_AND_AVAILABLE):
        if n_clients < 1:
            raise ValueError("A ledger needs at least one client.")
        if not isinstance(mode, AccrualMode):
            raise TypeError("Parameter mode must be an AccrualMode.")
        self._mode = mode
        self.rounds = 0
        self.utility = np.zeros(n_clients)
        self.credited = np.zeros(n_clients)
        self.missed = np.zeros(n_clients, dtype=np.int64)
        self.selected = np.zeros(n_clients, dtype=np.int64)
        self.available_rounds = np.zeros(n_clients, dtype=np.int64)
        self.since_selected = np.zeros(n_clients, dtype=np.int64)
        self.last_participation = np.zeros(n_clients, dtype=np.int64)

    @property
    def mode(self) -> AccrualMode:
        return self._mode

    @property
    def n_clients(self) -> int:
        return self.utility.size

    def accrue(self, available: np.ndarray, chosen: Sequence[int], increments: np.ndarray, t: int) -> None:
        """
        Record round ``t``: availability, selections and utility increments.

        Raises
        ------
            ContractViolationError: If a chosen client is unavailable or an
                increment is negative.
        """
        available = np.asarray(available, dtype=bool)
        chosen_mask = np.zeros(self.n_clients, dtype=bool)
        chosen_mask[np.asarray(chosen, dtype=np.int64)] = True
        if np.any(chosen_mask & ~available):
            culprits = np.flatnonzero(chosen_mask & ~available).tolist()
            raise ContractViolationError(f"Clients {culprits} were selected while unavailable.")
        increments = np.asarray(increments, dtype=float)
        if np.any(increments < 0):
            raise ContractViolationError("Utility increments must be non-negative.")

        fires = available if self._mode is AccrualMode.AVAILABILITY_ONLY else chosen_mask
        self.utility += np.where(fires, increments, 0.0)
        self.missed += ~available
        self.available_rounds += available
        self.selected += chosen_mask
        self.last_participation[chosen_mask] = t
        self.since_selected = np.where(chosen_mask, 0, self.since_selected + 1)
        self.rounds += 1

    def credit(self, clients: Sequence[int], amounts: np.ndarray) -> None:
        """Add surrogate utility credit to ``clients``."""
        amounts = np.asarray(amounts, dtype=float)
        if np.any(amounts < 0):
            raise ContractViolationError("Utility credit must be non-negative.")
        clients = np.asarray(clients, dtype=np.int64)
        np.add.at(self.utility, clients, amounts)
        np.add.at(self.credited, clients, amounts)

    def state(self, k: int, pi_hat: float = 1.0) -> ClientState:
        last = int(self.last_participation[k])
        return ClientState(
            client_id=k,
            utility=float(self.utility[k]),
            missed=int(self.missed[k]),
            selected=int(self.selected[k]),
            available_rounds=int(self.available_rounds[k]),
            last_participation=last if last > 0 else None,
            pi_hat=float(pi_hat),
        )

    def states(self, pi_hat: Optional[np.ndarray] = None) -> List[ClientState]:
        if pi_hat is None:
            pi_hat = np.ones(self.n_clients)
        return [self.state(k, pi_hat[k]) for k in range(self.n_clients)]


@dataclass(frozen=True)
class UtilityModel:
    """
    Synthetic per-round utility increments bounded in ``[0, M]``.

    ``CONSTANT`` always yields ``mu_k``. ``UNIFORM_BOUNDED`` draws uniformly on
    ``mu_k +/- h`` with ``h = min(sigma, mu_k, M - mu_k)`` so the mean stays
    ``mu_k`` and the draw stays within bounds. ``LOSS_DELTA`` increments come
    from the quadratic workload and cannot be drawn here.
    """
    mu: np.ndarray
    bound: float = 1.0
    kind: NoiseKind = NoiseKind.CONSTANT
    sigma: float = 0.0
    half_width: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if not self.bound > 0:
            raise ValueError("The utility bound M must be positive.")
        if np.any(mu < 0) or np.any(mu > self.bound):
            raise ValueError("Utility means must lie in [0, M].")
        if self.sigma < 0:
            raise ValueError("The utility spread must be non-negative.")
        if not isinstance(self.kind, NoiseKind):
            raise TypeError("Parameter kind must be a NoiseKind.")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "half_width", np.minimum.reduce([np.full_like(mu, self.sigma), mu, self.bound - mu]))

    @property
    def n_clients(self) -> int:
        return self.mu.size

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """Draw the increments of one round for every client."""
        if self.kind is NoiseKind.CONSTANT:
            return self.mu.copy()
        if self.kind is NoiseKind.UNIFORM_BOUNDED:
            return self.mu + self.half_width * (2.0 * rng.random(self.n_clients) - 1.0)
        raise ContractViolationError("Loss-delta increments are produced by the quadratic workload.")

    def draw_rounds(self, rounds: int, rng: np.random.Generator) -> np.ndarray:
        """Draw a (rounds, N) matrix of increments."""
        if self.kind is NoiseKind.CONSTANT:
            return np.broadcast_to(self.mu, (rounds, self.n_clients)).copy()
        if self.kind is NoiseKind.UNIFORM_BOUNDED:
            return self.mu + self.half_width * (2.0 * rng.random((rounds, self.n_clients)) - 1.0)
        raise ContractViolationError("Loss-delta increments are produced by the quadratic workload.")


def normalize_utilities(utility, pi) -> Tuple[np.ndarray, float]:
    """
    Availability-normalized utilities ``u_k / pi_k`` and their mean.

    Raises
    ------
        ContractViolationError: If an availability is not positive.
    """
    utility = np.asarray(utility, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ContractViolationError("Availabilities used for normalization must be positive.")
    normalized = utility / pi
    return normalized, float(normalized.mean()) if normalized.size else 0.0


def parity_top_up(utility, pi, offered) -> np.ndarray:
    """
    Cap surrogate credit so that it only closes normalized-utility gaps.

    A client may receive at most ``pi_k * (mean - u_k / pi_k)``, the credit that
    lifts its normalized utility up to the current population mean. Clients at
    or above the mean receive nothing, and no client is lifted past the mean,
    so a capped credit never raises the spread of the normalized utilities.

    Parameters
    ----------
        utility: array_like
            Current utilities ``u_k``.

        pi: array_like
            Positive availabilities used for normalization.

        offered: array_like
            Non-negative credit proposed for each client.

    Returns
    -------
        credit: numpy.ndarray
            ``min(offered_k, headroom_k)``.
    """
    normalized, mean = normalize_utilities(utility, pi)
    offered = np.asarray(offered, dtype=float)
    if np.any(offered < 0):
        raise ContractViolationError("Utility credit must be non-negative.")
    headroom = np.maximum(mean - normalized, 0.0) * np.asarray(pi, dtype=float)
    return np.minimum(offered, headroom)


def normalized_utilities(states: Iterable[ClientState], pi=None,
                         source: NormalizationSource = NormalizationSource.TRUE_PI) -> Tuple[np.ndarray, float]:
    """
    Normalized utility vector of a list of client states.

    Parameters
    ----------
        states: iterable of ClientState
            States ordered by client id.

        pi: array_like, optional
            True availabilities, required for ``TRUE_PI``.

        source: NormalizationSource, optional
            ``TRUE_PI`` divides by ``pi``, ``ESTIMATED_PI`` by each state's
            ``pi_hat``. Default value is ``TRUE_PI``.

    Returns
    -------
        normalized: numpy.ndarray
            The vector of ``u_k / pi_k``.

        mean: float
            Its mean.
    """
    states = list(states)
    utility = [state.utility for state in states]
    if source is NormalizationSource.ESTIMATED_PI:
        pi = [state.pi_hat for state in states]
    elif pi is None:
        raise ContractViolationError("True-pi normalization needs the availabilities.")
    return normalize_utilities(utility, pi)


def fairness_variance(normalized) -> float:
    """
    Population variance of the normalized utilities.

    Raises
    ------
        UndefinedInputError: If the vector is empty.
    """
    normalized = np.asarray(normalized, dtype=float)
    if normalized.size == 0:
        raise UndefinedInputError("The fairness variance of an empty population is undefined.")
    return float(np.var(normalized))


@dataclass(frozen=True)
class ParityPrediction:
    """
    Closed-form expectations under idealized selection.

    Attributes
    ----------
        expected: numpy.ndarray
            ``E[u_k / pi_k] = T mu_k / (C pi_k)``.

        mean: float
            Mean of ``expected``.

        deviation: numpy.ndarray
            ``(T / C) |mu_k / pi_k - mean_j(mu_j / pi_j)|``.

        bound: float
            Uniform deviation bound ``2 T M / (C pi_min)``.

        normalizer: float
            ``C = sum_j 1 / pi_j``.
    """
    expected: np.ndarray
    mean: float
    deviation: np.ndarray
    bound: float
    normalizer: float


def idealized_parity_prediction(pi, mu, rounds: int, bound: float = 1.0) -> ParityPrediction:
    """
    Expected normalized utilities when each available client is selected
    independently with probability ``(1 / pi_k) / C``.

    Parameters
    ----------
        pi: array_like
            Availabilities in (0, 1].

        mu: array_like
            Utility means in [0, M].

        rounds: int
            Horizon T.

        bound: float, optional
            Utility bound M. Default value is 1.0.

    Returns
    -------
        prediction: ParityPrediction
    """
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(pi <= 0):
        raise ContractViolationError("Availabilities must be positive.")
    if np.any(mu < 0) or np.any(mu > bound):
        raise ContractViolationError("Utility means must lie in [0, M].")
    normalizer = float(np.sum(1.0 / pi))
    rate = mu / pi
    expected = rounds * rate / normalizer
    deviation = rounds / normalizer * np.abs(rate - rate.mean())
    return ParityPrediction(
        expected=expected,
        mean=float(expected.mean()),
        deviation=deviation,
        bound=2.0 * rounds * bound / (normalizer * float(pi.min())),
        normalizer=normalizer,
    )


def simulate_idealized_selection(pi, utility_model: UtilityModel, rounds: int,
                                 rng: np.random.Generator, replicates: int = 1) -> np.ndarray:
    """
    Monte-Carlo realization of idealized selection.

    Every round each client is available with probability ``pi_k`` and, when
    available, selected with probability ``(1 / pi_k) / C``; selected clients
    accrue their increment.

    Returns
    -------
        normalized: numpy.ndarray
            True-pi normalized utilities, shape (replicates, N).
    """
    pi = np.asarray(pi, dtype=float)
    if pi.size != utility_model.n_clients:
        raise ContractViolationError("Availabilities and utility means disagree on N.")
    select_p = (1.0 / pi) / np.sum(1.0 / pi)
    out = np.empty((replicates, pi.size))
    for r in range(replicates):
        available = rng.random((rounds, pi.size)) < pi
        chosen = available & (rng.random((rounds, pi.size)) < select_p)
        increments = utility_model.draw_rounds(rounds, rng)
        out[r] = np.where(chosen, increments, 0.0).sum(axis=0) / pi
    logger.debug("Simulated %d idealized replicates over %d rounds.", replicates, rounds)
    return out

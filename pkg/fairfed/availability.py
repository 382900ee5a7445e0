"""
Client availability: generative processes, device traces and online estimators.

A client is *available* at round ``t`` when it can be reached and is eligible
to train. Four process families generate the availability indicators
``A_k(t)``: independent Bernoulli draws, a two-state Markov chain with the same
stationary mean, a drifting Bernoulli process following a piecewise-linear
schedule, and a replay of a recorded device trace.
"""

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolationError, OutOfRangeError, TraceParseError

logger = logging.getLogger(__name__)


class AvailabilityKind(Enum):
    BERNOULLI = "bernoulli"
    MARKOV = "markov"
    DRIFTING = "drifting"
    TRACE = "trace"


class AvailabilityModel(object):
    """
    Generator of per-round availability indicator vectors.

    Use the alternative constructors rather than ``__init__``:
    :meth:`bernoulli`, :meth:`markov`, :meth:`drifting` and :meth:`trace`.

    The Markov family is parameterized by the stationary mean ``pi_k`` and a
    correlation time ``s >= 1``. The chain switches off -> on with probability
    ``pi_k / s`` and on -> off with probability ``(1 - pi_k) / s``, so its
    stationary mean is ``pi_k`` and consecutive rounds have correlation
    ``1 - 1/s``. Available runs last ``s / (1 - pi_k)`` rounds on average and
    unavailable runs ``s / pi_k``; see :meth:`mean_run_lengths`. ``s = 1``
    reproduces independent Bernoulli draws.

    Parameters
    ----------
        kind: AvailabilityKind
            The process family.

        pi: array_like, optional
            Per-client stationary means in (0, 1]. Bernoulli and Markov only.

        correlation_time: float, optional
            Correlation time of the Markov chain. Default value is 1.0.

        schedule_rounds: array_like of int, optional
            Strictly increasing breakpoint rounds of a drifting schedule.

        schedule_values: array_like, optional
            Availability means at the breakpoints, shape (B, N).

        timeline: array_like of bool, optional
            Recorded availability, shape (N, T). Trace only.

    Raises
    ------
        ValueError: If a parameter is outside its domain.
    """

    def __init__(self, kind: AvailabilityKind, *,
                 pi=None,
                 correlation_time: float = 1.0,
                 schedule_rounds=None,
                 schedule_values=None,
                 timeline=None):
        if not isinstance(kind, AvailabilityKind):
            raise TypeError("Parameter kind must be an AvailabilityKind.")
        self._kind = kind
        self._pi = None
        self._correlation_time = 1.0
        self._rounds = None
        self._values = None
        self._timeline = None

        if kind in (AvailabilityKind.BERNOULLI, AvailabilityKind.MARKOV):
            self._pi = _check_probabilities(pi, "pi")
            if kind is AvailabilityKind.MARKOV:
                correlation_time = float(correlation_time)
                if not math.isfinite(correlation_time) or correlation_time < 1.0:
                    raise ValueError("The correlation time must be a finite number >= 1.")
                self._correlation_time = correlation_time
        elif kind is AvailabilityKind.DRIFTING:
            rounds = np.asarray(schedule_rounds, dtype=np.int64).ravel()
            values = np.atleast_2d(np.asarray(schedule_values, dtype=float))
            if rounds.size == 0 or rounds[0] < 1 or np.any(np.diff(rounds) <= 0):
                raise ValueError("Schedule rounds must be non-empty, >= 1 and strictly increasing.")
            if values.shape[0] != rounds.size:
                raise ValueError("Schedule values need one row per breakpoint round.")
            _check_probabilities(values, "schedule values")
            self._rounds = rounds
            self._values = values
        else:
            timeline = np.asarray(timeline, dtype=bool)
            if timeline.ndim != 2 or timeline.shape[0] == 0 or timeline.shape[1] == 0:
                raise ValueError("A trace timeline must be a non-empty (clients, rounds) array.")
            self._timeline = timeline

    # Alternative constructors
    @classmethod
    def bernoulli(cls, pi) -> "AvailabilityModel":
        """Independent Bernoulli availability with per-client means ``pi``."""
        return cls(AvailabilityKind.BERNOULLI, pi=pi)

    @classmethod
    def markov(cls, pi, correlation_time: float) -> "AvailabilityModel":
        """Two-state Markov availability with stationary means ``pi``."""
        return cls(AvailabilityKind.MARKOV, pi=pi, correlation_time=correlation_time)

    @classmethod
    def drifting(cls, rounds, values) -> "AvailabilityModel":
        """
        Bernoulli availability whose means follow a piecewise-linear schedule.

        Before the first breakpoint and after the last one the means are held
        constant.
        """
        return cls(AvailabilityKind.DRIFTING, schedule_rounds=rounds, schedule_values=values)

    @classmethod
    def trace(cls, timeline) -> "AvailabilityModel":
        """Replay of a recorded (clients, rounds) boolean timeline."""
        return cls(AvailabilityKind.TRACE, timeline=timeline)

    # Properties
    @property
    def kind(self) -> AvailabilityKind:
        return self._kind

    @property
    def n_clients(self) -> int:
        if self._pi is not None:
            return self._pi.size
        if self._values is not None:
            return self._values.shape[1]
        return self._timeline.shape[0]

    @property
    def correlation_time(self) -> float:
        return self._correlation_time

    @property
    def horizon(self) -> Optional[int]:
        """Number of recorded rounds for a trace, ``None`` otherwise."""
        if self._timeline is None:
            return None
        return self._timeline.shape[1]

    @property
    def timeline(self) -> Optional[np.ndarray]:
        return None if self._timeline is None else self._timeline.copy()

    @property
    def is_stationary(self) -> bool:
        if self._kind is AvailabilityKind.DRIFTING:
            return bool(np.all(self._values == self._values[0]))
        return True

    def mean_at(self, t: int) -> np.ndarray:
        """
        True availability means at round ``t``.

        For traces this is the per-device mean over the whole timeline.

        Parameters
        ----------
            t: int
                The round index (>= 1).

        Returns
        -------
            pi: numpy.ndarray
                Vector of N means.
        """
        if self._pi is not None:
            return self._pi.copy()
        if self._timeline is not None:
            return self._timeline.mean(axis=1)
        rounds, values = self._rounds, self._values
        if t <= rounds[0]:
            return values[0].copy()
        if t >= rounds[-1]:
            return values[-1].copy()
        j = int(np.searchsorted(rounds, t, side="right")) - 1
        frac = (t - rounds[j]) / (rounds[j + 1] - rounds[j])
        return values[j] + frac * (values[j + 1] - values[j])

    def transition_probabilities(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Switching probabilities of the Markov chain.

        Returns
        -------
            p_on: numpy.ndarray
                Probability of moving from unavailable to available.

            p_off: numpy.ndarray
                Probability of moving from available to unavailable.
        """
        if self._kind is not AvailabilityKind.MARKOV:
            raise ContractViolationError("Only Markov models have transition probabilities.")
        return self._pi / self._correlation_time, (1.0 - self._pi) / self._correlation_time

    def mean_run_lengths(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Expected lengths, in rounds, of the available and unavailable runs of
        the Markov chain. A client with ``pi_k = 1`` never leaves, its
        available run is infinite.
        """
        p_on, p_off = self.transition_probabilities()
        with np.errstate(divide="ignore"):
            return 1.0 / p_off, 1.0 / p_on

    def __repr__(self) -> str:
        return f"AvailabilityModel(kind={self._kind.value}, n_clients={self.n_clients})"


def _check_probabilities(values, name: str) -> np.ndarray:
    if values is None:
        raise ValueError(f"Parameter {name} is required.")
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        raise ValueError(f"Parameter {name} must not be empty.")
    if not np.all(np.isfinite(array)) or np.any(array <= 0.0) or np.any(array > 1.0):
        raise ValueError(f"Every entry of {name} must lie in (0, 1].")
    return array.ravel() if array.ndim <= 1 else array


def step(model: AvailabilityModel, t: int, rng: np.random.Generator,
         previous: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Draw the availability vector of round ``t``.

    Parameters
    ----------
        model: AvailabilityModel
            The availability process.

        t: int
            Round index, starting at 1.

        rng: numpy.random.Generator
            Source of randomness. Unused for traces.

        previous: numpy.ndarray, optional
            Availability of round ``t - 1``. Only the Markov chain reads it;
            when missing, the chain starts from its stationary distribution.

    Returns
    -------
        available: numpy.ndarray
            Boolean vector of N indicators ``A_k(t)``.

    Raises
    ------
        ContractViolationError: If ``t < 1``.
        OutOfRangeError: If ``t`` exceeds the length of a trace.
    """
    if t < 1:
        raise ContractViolationError(f"Rounds start at 1, got {t}.")
    kind = model.kind
    if kind is AvailabilityKind.TRACE:
        if t > model.horizon:
            raise OutOfRangeError(f"Round {t} is beyond the trace length {model.horizon}.")
        return model._timeline[:, t - 1].copy()
    if kind is AvailabilityKind.MARKOV and previous is not None:
        p_on, p_off = model.transition_probabilities()
        u = rng.random(model.n_clients)
        return np.where(np.asarray(previous, dtype=bool), u >= p_off, u < p_on)
    return rng.random(model.n_clients) < model.mean_at(t)


def simulate(model: AvailabilityModel, rounds: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw ``rounds`` consecutive availability vectors.

    Returns
    -------
        availability: numpy.ndarray
            Boolean matrix of shape (rounds, N); row ``t - 1`` holds round ``t``.
    """
    if model.kind is AvailabilityKind.BERNOULLI:
        return rng.random((rounds, model.n_clients)) < model.mean_at(1)
    out = np.empty((rounds, model.n_clients), dtype=bool)
    previous = None
    for t in range(1, rounds + 1):
        previous = step(model, t, rng, previous)
        out[t - 1] = previous
    return out


class EstimatorMode(Enum):
    RUNNING_MEAN = "running_mean"
    SLIDING_WINDOW = "sliding_window"


class AvailabilityEstimator(object):
    """
    Online per-client availability estimator ``pi_hat_k(t)``.

    ``RUNNING_MEAN`` averages every observation of a client, ``SLIDING_WINDOW``
    averages its last ``window`` observations. Estimates are clamped to
    ``[floor, 1]`` so ``1 / pi_hat`` stays finite. Before the first observation
    the estimate is 1.

    Parameters
    ----------
        n_clients: int
            Number of tracked clients.

        mode: EstimatorMode, optional
            Averaging rule. Default value is ``RUNNING_MEAN``.

        window: int, optional
            Window length in rounds, required by ``SLIDING_WINDOW``.

        floor: float, optional
            Lower clamp of every estimate. Default value is 0.01.
    """

    def __init__(self, n_clients: int, mode: EstimatorMode = EstimatorMode.RUNNING_MEAN,
                 window: Optional[int] = None, floor: float = 0.01):
        if not isinstance(mode, EstimatorMode):
            raise TypeError("Parameter mode must be an EstimatorMode.")
        if n_clients < 1:
            raise ValueError("An estimator needs at least one client.")
        if not 0.0 < floor <= 1.0:
            raise ValueError("The estimator floor must lie in (0, 1].")
        if mode is EstimatorMode.SLIDING_WINDOW and (window is None or window < 1):
            raise ValueError("A sliding window needs a length >= 1.")
        self._mode = mode
        self._window = int(window) if mode is EstimatorMode.SLIDING_WINDOW else None
        self._floor = float(floor)
        self._n = int(n_clients)
        self.reset()

    @property
    def mode(self) -> EstimatorMode:
        return self._mode

    @property
    def window(self) -> Optional[int]:
        return self._window

    @property
    def floor(self) -> float:
        return self._floor

    @property
    def n_clients(self) -> int:
        return self._n

    @property
    def observations(self) -> np.ndarray:
        return self._counts.copy()

    @property
    def estimates(self) -> np.ndarray:
        """Current clamped estimates of all clients."""
        if self._mode is EstimatorMode.RUNNING_MEAN:
            hits, seen = self._sums, self._counts
        else:
            hits, seen = self._window_sums, np.minimum(self._counts, self._window)
        raw = np.divide(hits, seen, out=np.ones(self._n), where=seen > 0)
        return np.clip(raw, self._floor, 1.0)

    def reset(self) -> None:
        """Forget every observation."""
        self._counts = np.zeros(self._n, dtype=np.int64)
        self._sums = np.zeros(self._n, dtype=np.int64)
        if self._window is not None:
            self._history = np.zeros((self._window, self._n), dtype=np.int64)
            self._window_sums = np.zeros(self._n, dtype=np.int64)

    def update(self, k: int, available: bool, t: int) -> float:
        """
        Record one observation of client ``k`` and return its new estimate.

        Raises
        ------
            ContractViolationError: If ``t < 1``.
        """
        if t < 1:
            raise ContractViolationError(f"Rounds start at 1, got {t}.")
        a = int(bool(available))
        if self._window is not None:
            slot = self._counts[k] % self._window
            self._window_sums[k] += a - self._history[slot, k]
            self._history[slot, k] = a
        self._counts[k] += 1
        self._sums[k] += a
        return float(self.estimates[k])

    def observe(self, available: np.ndarray, t: int) -> np.ndarray:
        """
        Record one round of observations for every client.

        Parameters
        ----------
            available: numpy.ndarray
                Boolean vector ``A(t)``.

            t: int
                Round index (>= 1).

        Returns
        -------
            estimates: numpy.ndarray
                The updated clamped estimates.
        """
        if t < 1:
            raise ContractViolationError(f"Rounds start at 1, got {t}.")
        a = np.asarray(available, dtype=np.int64)
        if self._window is not None:
            columns = np.arange(self._n)
            slots = self._counts % self._window
            self._window_sums += a - self._history[slots, columns]
            self._history[slots, columns] = a
        self._counts += 1
        self._sums += a
        return self.estimates


def update_estimate(estimator: AvailabilityEstimator, k: int, available: bool, t: int) -> float:
    """Functional alias of :meth:`AvailabilityEstimator.update`."""
    return estimator.update(k, available, t)


@dataclass(frozen=True)
class WindowDiagnostics:
    """
    Tracking quality of an estimator over the window ``[start, start + length - 1]``.

    ``epsilon`` is the largest absolute estimation error on the window, and
    ``delta`` the largest per-client total variation of the true means.
    """
    epsilon: float
    delta: float
    start: int
    length: int

    @property
    def total(self) -> float:
        return self.epsilon + self.delta


def _window_slice(n_rows: int, start: int, length: int) -> slice:
    if start < 1 or length < 1 or start + length - 1 > n_rows:
        raise OutOfRangeError(
            f"Window [{start}, {start + length - 1}] is outside the recorded rounds 1..{n_rows}.")
    return slice(start - 1, start - 1 + length)


def window_diagnostics(true_pi, estimates, start: int, length: int) -> WindowDiagnostics:
    """
    Compute the tracking error and the drift of availability on a window.

    Parameters
    ----------
        true_pi: array_like
            True means, shape (R, N); row ``t - 1`` holds round ``t``.

        estimates: array_like
            Estimator trajectory with the same shape.

        start: int
            First round of the window.

        length: int
            Window length ``W``.

    Returns
    -------
        diagnostics: WindowDiagnostics

    Raises
    ------
        OutOfRangeError: If the window exceeds the trajectories.
    """
    true_pi = np.atleast_2d(np.asarray(true_pi, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if true_pi.shape != estimates.shape:
        raise ContractViolationError("True and estimated trajectories must have the same shape.")
    window = _window_slice(true_pi.shape[0], start, length)
    epsilon = float(np.max(np.abs(estimates[window] - true_pi[window])))
    drift = np.abs(np.diff(true_pi[window], axis=0)).sum(axis=0)
    delta = float(drift.max()) if drift.size else 0.0
    return WindowDiagnostics(epsilon=epsilon, delta=delta, start=start, length=length)


def inverse_availability_shares(pi) -> np.ndarray:
    """Row-wise shares ``(1/pi_k) / sum_j (1/pi_j)``."""
    q = 1.0 / np.asarray(pi, dtype=float)
    return q / q.sum(axis=-1, keepdims=True)


def windowed_participation_error(true_pi, estimates, start: int, length: int) -> float:
    """
    Client-averaged gap between estimated and ideal window-mean participation.

    Each round's participation share of client ``k`` under inverse-availability
    sampling is computed from the estimates and from the true means; both are
    averaged over the window and the absolute differences are averaged over
    clients.
    """
    true_pi = np.atleast_2d(np.asarray(true_pi, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    window = _window_slice(true_pi.shape[0], start, length)
    realized = inverse_availability_shares(estimates[window]).mean(axis=0)
    ideal = inverse_availability_shares(true_pi[window]).mean(axis=0)
    return float(np.mean(np.abs(realized - ideal)))


# Device traces
class EventKind(Enum):
    WIFI_ON = "wifi_on"
    WIFI_OFF = "wifi_off"
    CHARGE_ON = "charge_on"
    CHARGE_OFF = "charge_off"


class TraceEvent(NamedTuple):
    timestamp: float
    device: str
    kind: EventKind


@dataclass(frozen=True)
class TraceTable:
    """
    Discretized device trace.

    Attributes
    ----------
        devices: tuple of str
            Device ids, sorted.

        timeline: numpy.ndarray
            Availability of each device per round, shape (N, R).

        percentage: numpy.ndarray
            Share of observed time each device was charging on Wi-Fi, in percent.

        flagged: numpy.ndarray
            Devices whose percentage is undefined (single event or zero span)
            and was set to 0.

        round_length: float
            Round length in seconds.

        origin: float
            Timestamp of the start of round 1.
    """
    devices: Tuple[str, ...]
    timeline: np.ndarray
    percentage: np.ndarray
    flagged: np.ndarray
    round_length: float
    origin: float

    @property
    def n_rounds(self) -> int:
        return self.timeline.shape[1]

    def to_model(self) -> AvailabilityModel:
        return AvailabilityModel.trace(self.timeline)


def read_trace(source: Union[str, Path, Iterable[str]]) -> List[TraceEvent]:
    """
    Read a ``timestamp_seconds,device_id,event`` trace.

    A first row whose timestamp is not numeric is treated as a header. Blank
    lines are skipped.

    Parameters
    ----------
        source: str, pathlib.Path or iterable of str
            File path, or the lines themselves.

    Returns
    -------
        events: list of TraceEvent

    Raises
    ------
        TraceParseError: On a malformed row, with its line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as handle:
            return _parse_rows(handle)
    return _parse_rows(source)


def _parse_rows(lines: Iterable[str]) -> List[TraceEvent]:
    events = []
    known = {kind.value: kind for kind in EventKind}
    for line_number, row in enumerate(csv.reader(lines), start=1):
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != 3:
            raise TraceParseError(line_number, f"expected 3 fields, found {len(row)}")
        stamp, device, event = (field.strip() for field in row)
        try:
            timestamp = float(stamp)
        except ValueError:
            if line_number == 1:
                continue
            raise TraceParseError(line_number, f"timestamp {stamp!r} is not a number") from None
        if not math.isfinite(timestamp):
            raise TraceParseError(line_number, "timestamp must be finite")
        if not device:
            raise TraceParseError(line_number, "empty device id")
        if event not in known:
            raise TraceParseError(line_number, f"unknown event {event!r}")
        events.append(TraceEvent(timestamp, device, known[event]))
    return events


def _on_intervals(events: Sequence[TraceEvent], end: float) -> np.ndarray:
    """Intervals during which a device is both charging and on Wi-Fi."""
    wifi = charge = False
    opened = 0.0
    intervals = []
    for event in events:
        before = wifi and charge
        if event.kind is EventKind.WIFI_ON:
            wifi = True
        elif event.kind is EventKind.WIFI_OFF:
            wifi = False
        elif event.kind is EventKind.CHARGE_ON:
            charge = True
        else:
            charge = False
        after = wifi and charge
        if after and not before:
            opened = event.timestamp
        elif before and not after:
            intervals.append((opened, event.timestamp))
    if wifi and charge:
        intervals.append((opened, max(opened, end)))
    return np.asarray(intervals, dtype=float).reshape(-1, 2)


def _overlap(intervals: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Measure of the union of disjoint ``intervals`` inside each ``[low, high)``."""
    if intervals.size == 0:
        return np.zeros(np.shape(lows))
    left = np.maximum(intervals[:, 0][None, :], np.asarray(lows)[..., None])
    right = np.minimum(intervals[:, 1][None, :], np.asarray(highs)[..., None])
    return np.clip(right - left, 0.0, None).sum(axis=-1)


def parse_device_trace(events: Sequence[TraceEvent], round_length: float,
                       horizon: Optional[float] = None,
                       origin: Optional[float] = None) -> TraceTable:
    """
    Discretize device events into per-round availability.

    A device is available in a round when it is charging and on Wi-Fi for at
    least half of the round. Both conditions start off. The availability
    percentage is measured between the device's first event and the horizon,
    or its last event when no horizon is given.

    Parameters
    ----------
        events: sequence of TraceEvent
            Events of all devices, in any order.

        round_length: float
            Round length in seconds.

        horizon: float, optional
            Observed duration in seconds after ``origin``. Defaults to the span
            up to the latest event.

        origin: float, optional
            Start of round 1. Defaults to the earliest timestamp.

    Returns
    -------
        table: TraceTable

    .. note::

        Devices with a single event, or whose observation span is empty, get a
        percentage of 0 and are flagged.
    """
    if round_length <= 0:
        raise ContractViolationError("The round length must be positive.")
    if not events:
        raise ContractViolationError("A trace needs at least one event.")
    stamps = np.array([event.timestamp for event in events], dtype=float)
    origin = float(stamps.min()) if origin is None else float(origin)
    end = float(stamps.max()) if horizon is None else origin + float(horizon)
    n_rounds = max(1, int(math.ceil((end - origin) / round_length - 1e-9)))
    lows = origin + round_length * np.arange(n_rounds)
    highs = lows + round_length

    by_device = {}
    for event in events:
        by_device.setdefault(event.device, []).append(event)
    devices = tuple(sorted(by_device))

    timeline = np.zeros((len(devices), n_rounds), dtype=bool)
    percentage = np.zeros(len(devices))
    flagged = np.zeros(len(devices), dtype=bool)
    for row, device in enumerate(devices):
        own = sorted(by_device[device], key=lambda event: event.timestamp)
        intervals = _on_intervals(own, end)
        timeline[row] = _overlap(intervals, lows, highs) >= 0.5 * round_length
        first = own[0].timestamp
        last = end if horizon is not None else own[-1].timestamp
        if len(own) < 2 or last <= first:
            flagged[row] = True
            logger.warning("Device %s has no observation span; its availability is set to 0%%.", device)
            continue
        span = _overlap(intervals, np.array([first]), np.array([last]))[0]
        percentage[row] = 100.0 * float(span) / (last - first)

    logger.debug("Parsed %d devices over %d rounds of %.1fs.", len(devices), n_rounds, round_length)
    return TraceTable(devices=devices, timeline=timeline, percentage=percentage,
                      flagged=flagged, round_length=float(round_length), origin=origin)

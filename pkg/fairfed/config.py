"""
Experiment configuration: a JSON document parsed into frozen dataclasses.

Each section validates itself at construction and reports problems as
:class:`fairfed.errors.ConfigError` carrying the dotted path of the field.
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .availability import (AvailabilityKind, AvailabilityModel, AvailabilityEstimator, EstimatorMode,
                           parse_device_trace, read_trace)
from .errors import ConfigError, FairFedError
from .selection import MissedCounter, PolicyKind, SamplingMode, SelectionPolicy
from .surrogate import SurrogateConfig
from .toyfl import TrainerConfig
from .utility import AccrualMode, NoiseKind, NormalizationSource, UtilityModel
from .workload import UtilitySignal, make_quadratic_clients

logger = logging.getLogger(__name__)

ENV_OUTPUT = "FAIRFED_OUT"
DEFAULT_OUTPUT = "fairfed_out"


def _enum(kind):
    def parse(value, path):
        if isinstance(value, kind):
            return value
        try:
            return kind(value)
        except ValueError:
            choices = ", ".join(member.value for member in kind)
            raise ConfigError(path, f"expected one of {choices}, got {value!r}") from None
    return parse


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _flag(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _text(value, path):
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    return value


def _numbers(value, path):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, f"expected a list of numbers, got {value!r}")
    return tuple(_number(item, f"{path}[{i}]") for i, item in enumerate(value))


def _pair(value, path):
    pair = _numbers(value, path)
    if len(pair) != 2 or pair[0] > pair[1]:
        raise ConfigError(path, "expected [low, high] with low <= high")
    return pair


def _number_or_numbers(value, path):
    return _numbers(value, path) if isinstance(value, (list, tuple)) else _number(value, path)


def _nested(value, path):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, "expected a list of lists")
    return tuple(_number_or_numbers(row, f"{path}[{i}]") for i, row in enumerate(value))


def _groups(value, path):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, "expected a list of [count, value] pairs")
    groups = []
    for i, group in enumerate(value):
        if not isinstance(group, (list, tuple)) or len(group) != 2:
            raise ConfigError(f"{path}[{i}]", "expected [count, value]")
        groups.append((_integer(group[0], f"{path}[{i}][0]"), _number(group[1], f"{path}[{i}][1]")))
    return tuple(groups)


def _schedule(value, path):
    if not isinstance(value, dict) or set(value) != {"rounds", "values"}:
        raise ConfigError(path, "expected an object with 'rounds' and 'values'")
    rounds = tuple(_integer(r, f"{path}.rounds[{i}]") for i, r in enumerate(value["rounds"]))
    values = _nested(value["values"], f"{path}.values")
    if len(rounds) == 0 or len(rounds) != len(values):
        raise ConfigError(path, "needs one value row per breakpoint round")
    return {"rounds": rounds, "values": values}


def _clusters(value, path):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty list of {count, center}")
    clusters = []
    for i, cluster in enumerate(value):
        where = f"{path}[{i}]"
        if not isinstance(cluster, dict) or set(cluster) != {"count", "center"}:
            raise ConfigError(where, "expected an object with 'count' and 'center'")
        clusters.append({"count": _integer(cluster["count"], f"{where}.count"),
                         "center": _numbers(cluster["center"], f"{where}.center")})
    return tuple(clusters)


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(item) for item in value]
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    return value


def _option(default=None, parse=None, key=None):
    return field(default=default, metadata={"parse": parse, "key": key})


def _from_mapping(cls, data, section: str, **extra):
    if not isinstance(data, dict):
        raise ConfigError(section or "<root>", "expected an object")
    known = {f.metadata.get("key") or f.name: f for f in fields(cls) if f.init and "parse" in f.metadata}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}" if section else unknown[0], "unknown field")
    values = dict(extra)
    for key, value in data.items():
        spec = known[key]
        path = f"{section}.{key}" if section else key
        if value is None:
            values[spec.name] = None
        else:
            values[spec.name] = spec.metadata["parse"](value, path) if spec.metadata["parse"] else value
    return cls(**values)


def _to_mapping(instance) -> Dict[str, Any]:
    out = {}
    for f in fields(instance):
        if "parse" not in f.metadata:
            continue
        value = getattr(instance, f.name)
        if value is not None:
            out[f.metadata.get("key") or f.name] = _plain(value)
    return out


@dataclass(frozen=True)
class AvailabilitySpec:
    """The ``availability`` section."""
    kind: AvailabilityKind = _option(AvailabilityKind.BERNOULLI, _enum(AvailabilityKind))
    pi: Optional[Tuple[float, ...]] = _option(None, _numbers)
    pi_linspace: Optional[Tuple[float, float]] = _option(None, _pair)
    pi_uniform: Optional[Tuple[float, float]] = _option(None, _pair)
    pi_groups: Optional[Tuple[Tuple[int, float], ...]] = _option(None, _groups)
    correlation_time: float = _option(1.0, _number)
    schedule: Optional[Dict[str, tuple]] = _option(None, _schedule)
    trace_path: Optional[str] = _option(None, _text)
    round_length: float = _option(60.0, _number)
    horizon: Optional[float] = _option(None, _number)

    def __post_init__(self):
        sources = [name for name in ("pi", "pi_linspace", "pi_uniform", "pi_groups") if getattr(self, name) is not None]
        if self.kind in (AvailabilityKind.BERNOULLI, AvailabilityKind.MARKOV):
            if len(sources) != 1:
                raise ConfigError("availability.pi", "give exactly one of pi, pi_linspace, pi_uniform, pi_groups")
            values = []
            if self.pi is not None:
                values = list(self.pi)
            elif self.pi_groups is not None:
                values = [value for _, value in self.pi_groups]
                if any(count < 1 for count, _ in self.pi_groups):
                    raise ConfigError("availability.pi_groups", "group sizes must be >= 1")
            else:
                values = list(self.pi_linspace or self.pi_uniform)
            if any(not 0.0 < value <= 1.0 for value in values):
                raise ConfigError(f"availability.{sources[0]}", "availabilities must lie in (0, 1]")
        if self.kind is AvailabilityKind.MARKOV and self.correlation_time < 1:
            raise ConfigError("availability.correlation_time", "must be >= 1")
        if self.kind is AvailabilityKind.DRIFTING and self.schedule is None:
            raise ConfigError("availability.schedule", "required for drifting availability")
        if self.kind is AvailabilityKind.TRACE:
            if self.trace_path is None:
                raise ConfigError("availability.trace_path", "required for trace availability")
            if self.round_length <= 0:
                raise ConfigError("availability.round_length", "must be positive")

    def resolve_pi(self, n_clients: int, rng: np.random.Generator) -> np.ndarray:
        """Stationary availabilities of the population."""
        if self.pi is not None:
            pi = np.asarray(self.pi, dtype=float)
        elif self.pi_linspace is not None:
            pi = np.linspace(*self.pi_linspace, n_clients)
        elif self.pi_uniform is not None:
            pi = rng.uniform(*self.pi_uniform, n_clients)
        else:
            pi = np.concatenate([np.full(count, value) for count, value in self.pi_groups])
        if pi.size != n_clients:
            raise ConfigError("availability.pi", f"describes {pi.size} clients, expected {n_clients}")
        return pi

    def build(self, n_clients: int, rng: np.random.Generator, base_dir: Optional[Path] = None) -> AvailabilityModel:
        """
        Instantiate the availability model.

        ``pi_uniform`` draws from ``rng``; trace paths are resolved against
        ``base_dir``.
        """
        try:
            if self.kind is AvailabilityKind.BERNOULLI:
                return AvailabilityModel.bernoulli(self.resolve_pi(n_clients, rng))
            if self.kind is AvailabilityKind.MARKOV:
                return AvailabilityModel.markov(self.resolve_pi(n_clients, rng), self.correlation_time)
            if self.kind is AvailabilityKind.DRIFTING:
                rows = [np.broadcast_to(np.asarray(row, dtype=float), (n_clients,)) for row in self.schedule["values"]]
                return AvailabilityModel.drifting(self.schedule["rounds"], np.stack(rows))
        except ValueError as error:
            if isinstance(error, FairFedError):
                raise
            raise ConfigError(f"availability.{self.kind.value}", str(error)) from error
        path = Path(self.trace_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            events = read_trace(path)
        except OSError as error:
            raise ConfigError("availability.trace_path", f"cannot read {path}: {error.strerror}") from error
        table = parse_device_trace(events, self.round_length, horizon=self.horizon)
        if len(table.devices) != n_clients:
            raise ConfigError("availability.trace_path", f"trace has {len(table.devices)} devices, expected {n_clients}")
        return table.to_model()


@dataclass(frozen=True)
class EstimatorSpec:
    """The ``estimator`` section."""
    mode: EstimatorMode = _option(EstimatorMode.RUNNING_MEAN, _enum(EstimatorMode))
    window: Optional[int] = _option(None, _integer)
    floor: float = _option(0.01, _number)

    def __post_init__(self):
        if self.mode is EstimatorMode.SLIDING_WINDOW and (self.window is None or self.window < 1):
            raise ConfigError("estimator.window", "a sliding window needs a length >= 1")
        if not 0.0 < self.floor <= 1.0:
            raise ConfigError("estimator.floor", "must lie in (0, 1]")

    def build(self, n_clients: int) -> AvailabilityEstimator:
        return AvailabilityEstimator(n_clients, self.mode, self.window, self.floor)


@dataclass(frozen=True)
class SelectionSpec:
    """The ``selection`` section, describing the fair arm."""
    kind: PolicyKind = _option(PolicyKind.INVERSE_AVAILABILITY, _enum(PolicyKind))
    mode: SamplingMode = _option(SamplingMode.SAMPLE_PROPORTIONAL, _enum(SamplingMode))
    alpha: Union[float, Tuple[float, ...]] = _option(1.0, _number_or_numbers)
    lam: float = _option(0.0, _number, key="lambda")
    epsilon: float = _option(0.01, _number)
    missed_counter: MissedCounter = _option(MissedCounter.UNAVAILABLE, _enum(MissedCounter))

    def __post_init__(self):
        if np.any(np.asarray(self.alpha, dtype=float) <= 0):
            raise ConfigError("selection.alpha", "must be > 0")
        if self.lam < 0:
            raise ConfigError("selection.lambda", "must be >= 0")
        if self.epsilon <= 0:
            raise ConfigError("selection.epsilon", "must be > 0")

    def policy(self, m: int) -> SelectionPolicy:
        return SelectionPolicy(self.kind, m, self.mode, self.alpha, self.lam, self.epsilon, self.missed_counter)


class WorkloadKind(Enum):
    SYNTHETIC = "synthetic"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class WorkloadSpec:
    """The ``workload`` section."""
    kind: WorkloadKind = _option(WorkloadKind.SYNTHETIC, _enum(WorkloadKind))
    mu: Optional[Tuple[float, ...]] = _option(None, _numbers)
    mu_constant: Optional[float] = _option(None, _number)
    mu_linspace: Optional[Tuple[float, float]] = _option(None, _pair)
    bound: float = _option(1.0, _number)
    noise: NoiseKind = _option(NoiseKind.CONSTANT, _enum(NoiseKind))
    sigma: float = _option(0.0, _number)
    dimension: int = _option(2, _integer)
    clusters: Optional[Tuple[Dict[str, Any], ...]] = _option(None, _clusters)
    spread: float = _option(0.1, _number)
    curvature: Union[float, Tuple[float, ...]] = _option(1.0, _number_or_numbers)
    initial: Optional[Tuple[float, ...]] = _option(None, _numbers)
    step_size: float = _option(0.1, _number)
    local_epochs: int = _option(1, _integer)
    mixing: float = _option(1.0, _number)
    angle: float = _option(0.5, _number)
    utility_signal: UtilitySignal = _option(UtilitySignal.LOCAL_REDUCTION, _enum(UtilitySignal))

    def __post_init__(self):
        if not self.bound > 0:
            raise ConfigError("workload.bound", "must be > 0")
        if self.kind is WorkloadKind.SYNTHETIC:
            sources = [name for name in ("mu", "mu_constant", "mu_linspace") if getattr(self, name) is not None]
            if len(sources) != 1:
                raise ConfigError("workload.mu", "give exactly one of mu, mu_constant, mu_linspace")
            if self.noise is NoiseKind.LOSS_DELTA:
                raise ConfigError("workload.noise", "loss_delta increments need the quadratic workload")
            if self.sigma < 0:
                raise ConfigError("workload.sigma", "must be >= 0")
        else:
            if self.dimension < 1:
                raise ConfigError("workload.dimension", "must be >= 1")
            if self.clusters is None:
                raise ConfigError("workload.clusters", "required for the quadratic workload")
            for i, cluster in enumerate(self.clusters):
                if cluster["count"] < 1:
                    raise ConfigError(f"workload.clusters[{i}].count", "must be >= 1")
                if len(cluster["center"]) != self.dimension:
                    raise ConfigError(f"workload.clusters[{i}].center", f"needs {self.dimension} coordinates")
            if self.initial is not None and len(self.initial) != self.dimension:
                raise ConfigError("workload.initial", f"needs {self.dimension} coordinates")
            if self.spread < 0:
                raise ConfigError("workload.spread", "must be >= 0")
            try:
                self.trainer()
            except ValueError as error:
                raise ConfigError("workload", str(error)) from error

    def utility_model(self, n_clients: int) -> UtilityModel:
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
        elif self.mu_linspace is not None:
            mu = np.linspace(*self.mu_linspace, n_clients)
        else:
            mu = np.full(n_clients, self.mu_constant)
        if mu.size != n_clients:
            raise ConfigError("workload.mu", f"describes {mu.size} clients, expected {n_clients}")
        try:
            return UtilityModel(mu, self.bound, self.noise, self.sigma)
        except ValueError as error:
            raise ConfigError("workload.mu", str(error)) from error

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(self.step_size, self.local_epochs, self.mixing, self.angle, self.bound)

    def initial_model(self) -> np.ndarray:
        return np.zeros(self.dimension) if self.initial is None else np.asarray(self.initial, dtype=float)

    def clients(self, n_clients: int, rng: np.random.Generator):
        """Quadratic clients, optima drawn from ``rng``."""
        counts = [cluster["count"] for cluster in self.clusters]
        if sum(counts) != n_clients:
            raise ConfigError("workload.clusters", f"cluster sizes sum to {sum(counts)}, expected {n_clients}")
        curvature = np.asarray(self.curvature, dtype=float)
        if curvature.ndim and curvature.size != n_clients:
            raise ConfigError("workload.curvature", f"needs 1 or {n_clients} values")
        if np.any(curvature <= 0):
            raise ConfigError("workload.curvature", "must be > 0")
        centers = [cluster["center"] for cluster in self.clusters]
        return make_quadratic_clients(centers, counts, self.spread, curvature, rng, self.initial_model())


@dataclass(frozen=True)
class SurrogateSpec:
    """The ``surrogate`` section; only the fair arm uses surrogates."""
    enabled: bool = _option(False, _flag)
    eta0: float = _option(1.0, _number)
    decay: float = _option(0.5, _number)
    epsilon: float = _option(0.1, _number)
    utility_credit: bool = _option(True, _flag)

    def __post_init__(self):
        try:
            self.config()
        except ValueError as error:
            raise ConfigError("surrogate", str(error)) from error

    def config(self) -> SurrogateConfig:
        return SurrogateConfig(self.eta0, self.decay, self.epsilon, self.utility_credit)


_SECTIONS = {
    "availability": AvailabilitySpec,
    "estimator": EstimatorSpec,
    "selection": SelectionSpec,
    "workload": WorkloadSpec,
    "surrogate": SurrogateSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A complete experiment.

    Attributes
    ----------
        n_clients: int
            Population size N.

        clients_per_round: int
            Participants per round m, ``1 <= m <= N``.

        rounds: int
            Horizon T.

        seed: int
            Base seed; replicate ``r`` runs with ``seed + r``.

        replicates: int
            Number of independent replicates.

        workers: int
            Processes used for replicates.

        accrual: AccrualMode
            Utility accrual rule of both arms.

        normalization: NormalizationSource
            Availabilities used to normalize utilities in the metrics.

        epsilon_cv: float
            Stabilizer of the utility CV.

        metrics_every: int
            Metrics are computed every this many rounds, and at the last round.

        output_dir: str, optional
            Where logs go; see :func:`resolve_output_dir`.

        profile: bool
            Write a stage profile beside the logs.

        availability, estimator, selection, workload, surrogate:
            The sections.

        base_dir: pathlib.Path, optional
            Directory of the config file, for relative trace paths. Not serialized.
    """
    n_clients: int = _option(10, _integer)
    clients_per_round: int = _option(1, _integer)
    rounds: int = _option(100, _integer)
    seed: int = _option(0, _integer)
    replicates: int = _option(1, _integer)
    workers: int = _option(1, _integer)
    accrual: AccrualMode = _option(AccrualMode.SELECTED_AND_AVAILABLE, _enum(AccrualMode))
    normalization: NormalizationSource = _option(NormalizationSource.ESTIMATED_PI, _enum(NormalizationSource))
    epsilon_cv: float = _option(1e-8, _number)
    metrics_every: int = _option(1, _integer)
    output_dir: Optional[str] = _option(None, _text)
    profile: bool = _option(False, _flag)
    availability: AvailabilitySpec = field(default_factory=lambda: AvailabilitySpec(pi_uniform=(0.1, 1.0)))
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    workload: WorkloadSpec = field(default_factory=lambda: WorkloadSpec(mu_constant=0.5))
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    base_dir: Optional[Path] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("n_clients", "must be >= 1")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ConfigError("clients_per_round", f"must lie in [1, {self.n_clients}]")
        if self.rounds < 1:
            raise ConfigError("rounds", "must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        if self.replicates < 1:
            raise ConfigError("replicates", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.epsilon_cv < 0:
            raise ConfigError("epsilon_cv", "must be >= 0")
        if self.metrics_every < 1:
            raise ConfigError("metrics_every", "must be >= 1")
        alpha = np.asarray(self.selection.alpha)
        if alpha.ndim and alpha.size != self.n_clients:
            raise ConfigError("selection.alpha", f"needs 1 or {self.n_clients} values")
        pi = self.availability.pi
        if pi is not None and len(pi) != self.n_clients:
            raise ConfigError("availability.pi", f"has {len(pi)} values, expected {self.n_clients}")
        groups = self.availability.pi_groups
        if groups is not None and sum(count for count, _ in groups) != self.n_clients:
            raise ConfigError("availability.pi_groups", f"group sizes must sum to {self.n_clients}")
        if self.workload.mu is not None and len(self.workload.mu) != self.n_clients:
            raise ConfigError("workload.mu", f"has {len(self.workload.mu)} values, expected {self.n_clients}")
        if self.workload.clusters is not None and self.workload.kind is WorkloadKind.QUADRATIC:
            total = sum(cluster["count"] for cluster in self.workload.clusters)
            if total != self.n_clients:
                raise ConfigError("workload.clusters", f"cluster sizes sum to {total}, expected {self.n_clients}")

    @property
    def policy(self) -> SelectionPolicy:
        return self.selection.policy(self.clients_per_round)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        """
        Parse a configuration document.

        Raises
        ------
            ConfigError: On unknown keys, wrong types or invalid values.
        """
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a JSON object")
        top = {key: value for key, value in data.items() if key not in _SECTIONS}
        sections = {name: _from_mapping(spec, data[name], name) for name, spec in _SECTIONS.items() if name in data}
        return _from_mapping(cls, top, "", base_dir=base_dir, **sections)

    def to_dict(self) -> Dict[str, Any]:
        out = _to_mapping(self)
        for name in _SECTIONS:
            out[name] = _to_mapping(getattr(self, name))
        return out

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with top-level fields replaced; ``None`` values are ignored."""
        return replace(self, **{key: value for key, value in changes.items() if value is not None})


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a JSON configuration file.

    Raises
    ------
        ConfigError: If the file is missing, is not valid JSON or fails validation.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as error:
        raise ConfigError("config", f"{path} is not valid JSON (line {error.lineno}: {error.msg})") from None
    except OSError as error:
        raise ConfigError("config", f"cannot read {path}: {error.strerror}") from None
    config = ExperimentConfig.from_dict(data, base_dir=path.resolve().parent)
    logger.debug("Loaded configuration from %s.", path)
    return config


def resolve_output_dir(flag: Optional[str], config: Optional[ExperimentConfig] = None) -> Path:
    """Output directory: CLI flag, then config, then ``FAIRFED_OUT``, then ``./fairfed_out``."""
    for candidate in (flag, config.output_dir if config else None, os.environ.get(ENV_OUTPUT)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT)

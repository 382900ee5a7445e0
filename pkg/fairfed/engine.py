"""
Dual-arm simulation: a fair scheduler and a uniformly random one play the same
availability realization round after round.

The fair arm selects with the configured policy and, when enabled, uses
surrogates for unavailable clients. The vanilla arm samples uniformly among
available clients. The arms share only the availability draws and the
environment (availabilities drawn per seed, client optima); their ledgers,
workloads and random streams are disjoint.
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .availability import step
from .config import ExperimentConfig, WorkloadKind, resolve_output_dir
from .errors import UndefinedInputError
from .metrics import CSV_HEADER, MetricsRow, compute_row
from .profiling import StageProfiler
from .selection import MissedCounter, PolicyKind, SelectionPolicy, select, weights
from .toyfl import TrajectoryRecord
from .utility import ClientLedger, NormalizationSource, parity_top_up
from .workload import QuadraticWorkload, RoundOutcome, SyntheticWorkload

logger = logging.getLogger(__name__)

ARMS = ("fair", "vanilla")
CLIENT_HEADER = ("arm", "id", "pi_true", "pi_hat", "u", "u_norm", "selected", "missed")
SUMMARY_METRICS = (
    "performance", "fairness_variance", "jain_perf", "jain_utility", "utility_cv",
    "selgap_paper", "selgap_share", "gini", "surrogate_contribution",
)
STAGES = ["observe", "select", "play", "record"]


@dataclass(frozen=True)
class RoundRecord:
    """Both arms' metrics of one round, with the available-set size and chosen sets."""
    t: int
    n_available: int
    rows: Dict[str, MetricsRow]
    chosen: Dict[str, Tuple[int, ...]]


@dataclass(frozen=True)
class ClientRow:
    arm: str
    id: int
    pi_true: float
    pi_hat: float
    u: float
    u_norm: float
    selected: int
    missed: int


@dataclass
class RunResult:
    """
    Everything one replicate produced.

    ``records`` holds the rounds whose metrics were computed: every
    ``metrics_every``-th round and the last one.
    """
    seed: int
    records: List[RoundRecord]
    clients: List[ClientRow]
    ledgers: Dict[str, ClientLedger]
    trajectory: Optional[List[TrajectoryRecord]] = None
    profile: Optional[str] = None

    @property
    def rows(self) -> List[MetricsRow]:
        return [record.rows[arm] for record in self.records for arm in ARMS]

    def final(self, arm: str) -> MetricsRow:
        return self.records[-1].rows[arm]

    def series(self, arm: str, metric: str) -> np.ndarray:
        """Values of ``metric`` over the logged rounds."""
        return np.array([getattr(record.rows[arm], metric) for record in self.records])

    def at(self, t: int, arm: str) -> MetricsRow:
        """
        Row of round ``t``.

        Raises
        ------
            KeyError: If round ``t`` was not logged.
        """
        for record in self.records:
            if record.t == t:
                return record.rows[arm]
        raise KeyError(f"Round {t} was not logged.")


@dataclass
class _Arm:
    name: str
    policy: SelectionPolicy
    ledger: ClientLedger
    workload: Union[SyntheticWorkload, QuadraticWorkload]
    select_rng: np.random.Generator
    utility_rng: np.random.Generator
    contribution: float = 0.0
    chosen: Tuple[int, ...] = ()


class Simulation(object):
    """
    One replicate of a dual-arm experiment.

    Random streams come from ``SeedSequence(seed).spawn(6)``: environment,
    availability, fair selection, vanilla selection, fair utility and vanilla
    utility.

    Parameters
    ----------
        config: ExperimentConfig
            The experiment.

        seed: int, optional
            Overrides ``config.seed``.

        profiler: StageProfiler, optional
            When given, the round stages are wrapped by it.

        record_trajectory: bool, optional
            Keep the fair arm's optimization trajectory (quadratic workload only).
    """

    def __init__(self, config: ExperimentConfig, seed: Optional[int] = None,
                 profiler: Optional[StageProfiler] = None, record_trajectory: bool = False):
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(6)]
        environment, self._availability_rng = streams[0], streams[1]
        n = config.n_clients

        self.model = config.availability.build(n, environment, config.base_dir)
        self.estimator = config.estimator.build(n)
        surrogate = config.surrogate.config() if config.surrogate.enabled else None
        workloads = self._workloads(environment, surrogate, record_trajectory)
        vanilla = SelectionPolicy(PolicyKind.RANDOM, config.clients_per_round)
        self.arms = {
            "fair": _Arm("fair", config.policy, ClientLedger(n, config.accrual), workloads[0], streams[2], streams[4]),
            "vanilla": _Arm("vanilla", vanilla, ClientLedger(n, config.accrual), workloads[1], streams[3], streams[5]),
        }
        self._previous = None
        self.profiler = profiler
        if profiler is not None:
            profiler.attach(self, STAGES)

    def _workloads(self, environment, surrogate, record_trajectory):
        spec = self.config.workload
        n = self.config.n_clients
        if spec.kind is WorkloadKind.SYNTHETIC:
            model = spec.utility_model(n)
            return SyntheticWorkload(model, surrogate), SyntheticWorkload(model, None)
        clients = spec.clients(n, environment)
        trainer = spec.trainer()
        initial = spec.initial_model()
        return (
            QuadraticWorkload(clients, initial, trainer, surrogate, spec.utility_signal, record_trajectory),
            QuadraticWorkload(clients, initial, trainer, None, spec.utility_signal),
        )

    def normalization_pi(self, t: int) -> np.ndarray:
        floor = self.estimator.floor
        if self.config.normalization is NormalizationSource.TRUE_PI:
            return np.maximum(self.model.mean_at(t), floor)
        return self.estimator.estimates

    # Round stages
    def observe(self, t: int) -> np.ndarray:
        """Draw the shared availability of round ``t`` and update the estimates."""
        available = step(self.model, t, self._availability_rng, self._previous)
        self._previous = available
        self.estimator.observe(available, t)
        return available

    def select(self, arm: _Arm, available: np.ndarray) -> np.ndarray:
        ledger = arm.ledger
        pi_hat = self.estimator.estimates
        missed = ledger.since_selected if arm.policy.missed_counter is MissedCounter.UNSELECTED else ledger.missed
        normalized = None
        if arm.policy.kind is PolicyKind.UTILITY_COMPENSATED:
            normalized = ledger.utility / pi_hat
        raw = weights(arm.policy, pi_hat, missed, normalized)
        return select(arm.policy, available, raw, arm.select_rng)

    def play(self, arm: _Arm, available: np.ndarray, chosen: np.ndarray, t: int) -> RoundOutcome:
        zeros = np.zeros(self.config.n_clients)
        if chosen.size == 0:
            outcome = RoundOutcome(zeros, zeros.copy(), 0.0)
        else:
            outcome = arm.workload.play(t, available, chosen, arm.utility_rng)
        arm.ledger.accrue(available, chosen, outcome.increments, t)
        if outcome.credit.any():
            credit = parity_top_up(arm.ledger.utility, self.normalization_pi(t), outcome.credit)
            credited = np.flatnonzero(credit)
            if credited.size:
                arm.ledger.credit(credited, credit[credited])
        return outcome

    def record(self, arm: _Arm, t: int, n_available: int, contribution: float) -> MetricsRow:
        performance, per_client = arm.workload.performance(arm.ledger, t)
        normalized = arm.ledger.utility / self.normalization_pi(t)
        return compute_row(t, arm.name, performance, per_client, normalized, arm.ledger.selected,
                           self.config.clients_per_round, contribution, n_available, self.config.epsilon_cv)

    def run(self) -> RunResult:
        """
        Play every round.

        Returns
        -------
            result: RunResult
        """
        config = self.config
        logger.info("Run seed=%d: N=%d m=%d T=%d, fair policy %s/%s.", self.seed, config.n_clients,
                    config.clients_per_round, config.rounds, config.policy.kind.value, config.policy.mode.value)
        records = []
        for t in range(1, config.rounds + 1):
            available = self.observe(t)
            n_available = int(available.sum())
            if n_available == 0:
                logger.warning("Round %d: no client available, nothing is selected.", t)
            logged = t % config.metrics_every == 0 or t == config.rounds
            rows, chosen = {}, {}
            for name in ARMS:
                arm = self.arms[name]
                picks = self.select(arm, available)
                outcome = self.play(arm, available, picks, t)
                chosen[name] = tuple(picks.tolist())
                if logged:
                    rows[name] = self.record(arm, t, n_available, outcome.contribution)
            if not logged:
                continue
            logger.debug("Round %d: %d available, fair %s, vanilla %s, V fair=%.4g vanilla=%.4g.", t, n_available,
                         chosen["fair"], chosen["vanilla"], rows["fair"].fairness_variance,
                         rows["vanilla"].fairness_variance)
            records.append(RoundRecord(t, n_available, rows, chosen))

        final = records[-1].rows
        logger.info("Run seed=%d done: V fair=%.4g vanilla=%.4g, max deviation fair=%.4g vanilla=%.4g.", self.seed,
                    final["fair"].fairness_variance, final["vanilla"].fairness_variance,
                    final["fair"].max_deviation, final["vanilla"].max_deviation)
        fair_workload = self.arms["fair"].workload
        return RunResult(
            seed=self.seed,
            records=records,
            clients=self.client_rows(),
            ledgers={name: arm.ledger for name, arm in self.arms.items()},
            trajectory=getattr(fair_workload, "trajectory", None),
            profile=self.profiler.report() if self.profiler is not None else None,
        )

    def client_rows(self) -> List[ClientRow]:
        t = self.config.rounds
        pi_true = self.model.mean_at(t)
        pi_hat = self.estimator.estimates
        pi_norm = self.normalization_pi(t)
        rows = []
        for name in ARMS:
            ledger = self.arms[name].ledger
            for k in range(self.config.n_clients):
                rows.append(ClientRow(name, k, float(pi_true[k]), float(pi_hat[k]), float(ledger.utility[k]),
                                      float(ledger.utility[k] / pi_norm[k]), int(ledger.selected[k]),
                                      int(ledger.missed[k])))
        return rows


def _run_replicate(config: ExperimentConfig, seed: int, profile: bool) -> RunResult:
    profiler = StageProfiler(label_format="{name}") if profile else None
    return Simulation(config, seed, profiler).run()


def run_replicates(config: ExperimentConfig, workers: Optional[int] = None) -> List[RunResult]:
    """
    Run every replicate; replicate ``r`` uses seed ``config.seed + r``.

    With more than one worker the replicates run in separate processes. The
    results are ordered by replicate index either way.
    """
    workers = config.workers if workers is None else workers
    seeds = [config.seed + r for r in range(config.replicates)]
    if workers <= 1 or len(seeds) == 1:
        return [_run_replicate(config, seed, config.profile) for seed in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        futures = [pool.submit(_run_replicate, config, seed, config.profile) for seed in seeds]
        return [future.result() for future in futures]


def _format(value) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    """Write a CSV to ``<path>.partial`` and rename it on success."""
    partial = path.with_name(path.name + ".partial")
    try:
        with open(partial, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(partial, path)
    except OSError:
        logger.error("Writing %s failed; partial output left at %s.", path, partial)
        raise
    return path


def write_metrics_log(rows: Iterable[MetricsRow], path: Union[str, Path]) -> Path:
    """Write ``metrics_log.csv``: one line per (round, arm), floats with 6 significant digits."""
    return _write_rows(Path(path), CSV_HEADER, (row.csv_fields() for row in rows))


def write_client_table(clients: Iterable[ClientRow], path: Union[str, Path]) -> Path:
    """Write ``clients_final.csv``."""
    return _write_rows(Path(path), CLIENT_HEADER,
                       ([_format(getattr(row, name)) for name in CLIENT_HEADER] for row in clients))


def read_metrics_log(path: Union[str, Path]) -> List[MetricsRow]:
    """
    Read a ``metrics_log.csv`` back into rows.

    Raises
    ------
        UndefinedInputError: If the header does not match.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise UndefinedInputError(f"{path} is not a metrics log.")
        rows = []
        for fields in reader:
            values = dict(zip(CSV_HEADER, fields))
            rows.append(MetricsRow(
                round=int(values["round"]),
                arm=values["arm"],
                n_available=int(values["n_available"]),
                **{name: float(values[name]) for name in CSV_HEADER if name not in ("round", "arm", "n_available")},
            ))
    return rows


@dataclass(frozen=True)
class SummaryRow:
    arm: str
    metric: str
    mean: float
    std: float
    replicates: int


def final_rows(log: Sequence[MetricsRow]) -> Dict[str, MetricsRow]:
    """Last row of each arm."""
    last: Dict[str, MetricsRow] = {}
    for row in log:
        if row.arm not in last or row.round >= last[row.arm].round:
            last[row.arm] = row
    return last


def summarize(logs: Sequence[Sequence[MetricsRow]]) -> List[SummaryRow]:
    """
    Mean and population standard deviation of final-round metrics across replicates.

    Parameters
    ----------
        logs: sequence of metrics logs
            One log per replicate.

    Returns
    -------
        summary: list of SummaryRow
            One row per (arm, metric).
    """
    if not logs:
        raise UndefinedInputError("Nothing to summarize.")
    finals = [final_rows(log) for log in logs]
    arms = [arm for arm in ARMS if all(arm in final for final in finals)]
    arms += sorted({arm for final in finals for arm in final} - set(arms))
    summary = []
    for arm in arms:
        present = [final[arm] for final in finals if arm in final]
        for metric in SUMMARY_METRICS:
            values = np.array([getattr(row, metric) for row in present])
            summary.append(SummaryRow(arm, metric, float(values.mean()), float(values.std()), len(present)))
    return summary


_TABLE_COLUMNS = (
    ("Performance", "performance"),
    ("Jain (perf)", "jain_perf"),
    ("Jain (util)", "jain_utility"),
    ("Utility CV", "utility_cv"),
    ("Sel. Gap", "selgap_share"),
    ("Gini", "gini"),
    ("Fairness Var.", "fairness_variance"),
)


def format_summary_table(summary: Sequence[SummaryRow]) -> str:
    """Comparison table, one line per arm, cells ``mean ± std``."""
    cells = {(row.arm, row.metric): row for row in summary}
    arms = list(dict.fromkeys(row.arm for row in summary))
    widths = [max(len(title), 21) for title, _ in _TABLE_COLUMNS]
    lines = ["Arm      | " + " | ".join(title.ljust(w) for (title, _), w in zip(_TABLE_COLUMNS, widths))]
    lines.append("-" * len(lines[0]))
    for arm in arms:
        values = []
        for (_, metric), width in zip(_TABLE_COLUMNS, widths):
            row = cells[(arm, metric)]
            values.append(f"{row.mean:.4g} ± {row.std:.2g}".ljust(width))
        lines.append(f"{arm:<8} | " + " | ".join(values))
    return "\n".join(lines)


def write_summary(summary: Sequence[SummaryRow], path: Union[str, Path]) -> Path:
    return _write_rows(Path(path), ("arm", "metric", "mean", "std", "replicates"),
                       ([row.arm, row.metric, _format(row.mean), _format(row.std), str(row.replicates)]
                        for row in summary))


def collect_logs(directory: Union[str, Path]) -> List[List[MetricsRow]]:
    """
    Metrics logs under ``directory``: its own ``metrics_log.csv`` or those of
    its ``rep*/`` subdirectories.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("rep*/metrics_log.csv"))
    if (directory / "metrics_log.csv").exists():
        paths = [directory / "metrics_log.csv"]
    if not paths:
        raise FileNotFoundError(f"No metrics_log.csv under {directory}.")
    return [read_metrics_log(path) for path in paths]


def write_run(result: RunResult, directory: Union[str, Path]) -> Path:
    """Write one replicate's logs into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_metrics_log(result.rows, directory / "metrics_log.csv")
    write_client_table(result.clients, directory / "clients_final.csv")
    logger.info("Wrote %s.", directory / "metrics_log.csv")
    return directory


def run(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
        workers: Optional[int] = None) -> List[RunResult]:
    """
    Run an experiment and write its outputs.

    A single replicate writes ``metrics_log.csv`` and ``clients_final.csv``
    directly into the output directory; several replicates write one
    ``repNNN/`` directory each plus ``summary.csv``. The resolved configuration
    is saved as ``config_used.json`` and, when profiling, ``profile.txt``.

    Returns
    -------
        results: list of RunResult
            One per replicate, in replicate order.
    """
    directory = resolve_output_dir(str(out_dir) if out_dir is not None else None, config)
    directory.mkdir(parents=True, exist_ok=True)
    results = run_replicates(config, workers)
    if len(results) == 1:
        write_run(results[0], directory)
    else:
        for r, result in enumerate(results):
            write_run(result, directory / f"rep{r:03d}")
        write_summary(summarize([result.rows for result in results]), directory / "summary.csv")
    with open(directory / "config_used.json", "w", encoding="utf-8") as handle:
        json.dump(config.to_dict(), handle, indent=2)
        handle.write("\n")
    if config.profile:
        with open(directory / "profile.txt", "w", encoding="utf-8") as handle:
            for result in results:
                handle.write(f"# seed {result.seed}\n{result.profile}")
    return results

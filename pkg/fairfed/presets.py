"""
Named scenarios that reproduce the fairness claims of the simulator.

Each preset is an experiment document plus a set of embedded checks. Running a
preset writes the usual engine outputs for its experiment, evaluates the
checks on them (and on dedicated Monte-Carlo experiments where the claim is not
about a dual-arm run) and writes ``report.json``. A committed copy of every
document lives under ``configs/<name>.json``.

The seed and the preset name fully determine every output file.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import engine
from .availability import (AvailabilityEstimator, AvailabilityModel, EstimatorMode, simulate, window_diagnostics,
                           windowed_participation_error)
from .config import ExperimentConfig, resolve_output_dir
from .errors import AcceptanceError, ConfigError
from .selection import asymptotic_weight_limit, empirical_reactive_weights, selection_stats
from .surrogate import SurrogateConfig, bias_and_bound, exponential_bias_bound, reliability
from .toyfl import verify_descent_bounds
from .utility import NoiseKind, UtilityModel, idealized_parity_prediction, simulate_idealized_selection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    """Outcome of one embedded assertion."""
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class PresetReport:
    """
    Verdict of a preset run.

    Attributes
    ----------
        name: str
            The preset.

        seed: int
            Base seed of the run.

        checks: list of Check
            Embedded assertions in evaluation order.

        results: list of engine.RunResult
            The replicates of the preset's experiment.

        directory: pathlib.Path, optional
            Where the outputs were written.
    """
    name: str
    seed: int
    checks: List[Check]
    results: List[engine.RunResult] = field(default_factory=list, repr=False)
    directory: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "preset": self.name,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")
        return path

    def raise_for_failures(self) -> None:
        """
        Raises
        ------
            AcceptanceError: If any check failed.
        """
        if not self.passed:
            raise AcceptanceError(self.name, self.failed)

    def format(self) -> str:
        lines = [f"Preset {self.name} (seed {self.seed}): {'PASSED' if self.passed else 'FAILED'}"]
        for check in self.checks:
            lines.append(f"  [{'ok' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ScenarioPreset:
    """
    A named experiment with its acceptance checks.

    Parameters
    ----------
        name: str
            Identifier used on the command line.

        description: str
            One line shown by ``fairfed preset --list``.

        document: dict
            The experiment as a configuration document.

        checks: callable
            ``checks(config, results) -> list of Check``.
    """
    name: str
    description: str
    document: Dict[str, Any]
    checks: Callable[[ExperimentConfig, List[engine.RunResult]], List[Check]] = field(repr=False, compare=False)

    def config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.document)


def _share_check(name: str, flags: Sequence[bool], fraction: float, what: str) -> Check:
    """Pass when at least ``fraction`` of ``flags`` hold."""
    needed = math.ceil(fraction * len(flags) - 1e-9)
    hits = int(np.sum(flags))
    return Check(name, hits >= needed, f"{what} in {hits}/{len(flags)} (need {needed})")


def _check_rng(config: ExperimentConfig, *tags: int) -> np.random.Generator:
    """Random stream of a check, disjoint from the engine's streams."""
    return np.random.default_rng([config.seed, 9_973, *tags])


def _client_column(result: engine.RunResult, arm: str, column: str) -> np.ndarray:
    return np.array([getattr(row, column) for row in result.clients if row.arm == arm])


# Cumulative-utility convergence
def _convergence_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    n, rounds = config.n_clients, config.rounds
    model = config.workload.utility_model(n)
    tolerance = 0.05 * model.bound
    converged = []
    for result in results:
        pi = _client_column(result, "fair", "pi_true")
        rate = result.ledgers["fair"].utility / pi / rounds
        converged.append(bool(np.all(np.abs(rate - model.mu) <= tolerance)))
    checks = [_share_check("normalized_rate_converges", converged, 0.95,
                           f"|u_k/(pi_k T) - mu_k| <= {tolerance:g} for every client")]

    early = min(100, rounds)
    v_early = np.mean([result.at(early, "fair").fairness_variance for result in results]) / early ** 2
    v_late = np.mean([result.final("fair").fairness_variance for result in results]) / rounds ** 2
    ratio = v_late / v_early if v_early > 0 else 0.0
    checks.append(Check("variance_over_t2_decays", ratio < 0.02,
                        f"mean V_T/T^2 at T={rounds} is {ratio:.4g} of its value at T={early} (limit 0.02)"))
    return checks


# Selection parity
def _parity_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    m, rounds = config.clients_per_round, config.rounds
    target = m / config.n_clients
    close, tighter = [], []
    worst = 0.0
    for result in results:
        fair = selection_stats(result.ledgers["fair"].selected, rounds, m)
        vanilla = selection_stats(result.ledgers["vanilla"].selected, rounds, m)
        worst = max(worst, fair.max_deviation)
        close.append(fair.max_deviation <= 0.03)
        tighter.append(fair.std < vanilla.std)
    return [
        _share_check("frequencies_near_share", close, 0.9,
                     f"max_k |S_k/T - {target:g}| <= 0.03 (worst {worst:.4g})"),
        _share_check("fair_spread_below_random", tighter, 1.0, "std of S_k/T below the random arm"),
    ]


# Reactive-weight limits
LIMIT_PI = (0.02, 0.08)
LIMIT_LAMBDAS = (0.0, 0.7)
LIMIT_SEEDS = 40


def _limit_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    n = config.n_clients
    epsilon = config.selection.epsilon
    checks = []
    # With lambda = 0 and true availabilities the weights equal their limit at every t.
    pi = np.linspace(*LIMIT_PI, n)
    for i, lam in enumerate(LIMIT_LAMBDAS):
        if lam == 0:
            continue
        limit = asymptotic_weight_limit(pi, 1.0, lam, epsilon)
        hits = []
        for s in range(LIMIT_SEEDS):
            empirical = empirical_reactive_weights(pi, 1.0, lam, epsilon, 10_000, _check_rng(config, i, s))
            hits.append(bool(np.all(np.abs(empirical / limit - 1.0) <= 0.01)))
        checks.append(_share_check(f"true_pi_limit_lambda_{lam:g}", hits, 0.95,
                                   "every weight within 1% of the limit at t=10^4"))

    # Estimated availabilities add the estimator's error; checked on a longer horizon.
    pi = config.availability.resolve_pi(n, _check_rng(config, 99))
    for i, lam in enumerate(LIMIT_LAMBDAS):
        limit = asymptotic_weight_limit(pi, 1.0, lam, epsilon)
        hits = []
        for s in range(LIMIT_SEEDS):
            empirical = empirical_reactive_weights(pi, 1.0, lam, epsilon, 100_000, _check_rng(config, 10 + i, s),
                                                   estimated=True, floor=config.estimator.floor)
            hits.append(bool(np.all(np.abs(empirical / limit - 1.0) <= 0.05)))
        checks.append(_share_check(f"estimated_pi_limit_lambda_{lam:g}", hits, 0.95,
                                   "every weight within 5% of the limit at t=10^5"))
    return checks


# Idealized-selection identity
IDENTITY_SMALL = {"pi": (0.3, 0.8), "mu": (0.4, 0.6)}
IDENTITY_ROUNDS = 10_000
IDENTITY_REPLICATES = 100


def _identity_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    spec = config.workload
    large = config.workload.utility_model(config.n_clients)
    populations = {
        len(IDENTITY_SMALL["pi"]): (np.array(IDENTITY_SMALL["pi"]), np.array(IDENTITY_SMALL["mu"])),
        config.n_clients: (config.availability.resolve_pi(config.n_clients, _check_rng(config, 0)), large.mu),
    }
    checks = []
    for n, (pi, mu) in populations.items():
        model = UtilityModel(mu, spec.bound, NoiseKind.UNIFORM_BOUNDED, spec.sigma)
        prediction = idealized_parity_prediction(pi, mu, IDENTITY_ROUNDS, spec.bound)
        normalized = simulate_idealized_selection(pi, model, IDENTITY_ROUNDS, _check_rng(config, n),
                                                  IDENTITY_REPLICATES)
        relative = np.abs(normalized.mean(axis=0) / prediction.expected - 1.0)
        checks.append(Check(f"mean_matches_prediction_n{n}", bool(np.all(relative <= 0.02)),
                            f"largest relative error {relative.max():.4g} (limit 0.02)"))
        realized = np.abs(normalized - normalized.mean(axis=1, keepdims=True))
        violations = int(np.sum(realized > prediction.bound)) + int(np.sum(prediction.deviation > prediction.bound))
        checks.append(Check(f"deviation_within_bound_n{n}", violations == 0,
                            f"{violations} deviations above 2TM/(C pi_min) = {prediction.bound:.4g}"))
    return checks


# Drifting availability
DRIFTS = (0.15, 0.4, 0.9)
WINDOWS = (100, 200)
DRIFT_START = 200
DRIFT_SEEDS = 20


def drifting_population(n_clients: int, drift: float, start: int = DRIFT_START) -> AvailabilityModel:
    """
    Half the clients ramp up and half ramp down by ``drift`` around 0.5,
    flat until ``start`` and linear over the following ``start`` rounds.
    """
    low, high = 0.5 - drift / 2.0, 0.5 + drift / 2.0
    up = n_clients // 2
    before = np.concatenate([np.full(up, low), np.full(n_clients - up, high)])
    after = np.concatenate([np.full(up, high), np.full(n_clients - up, low)])
    return AvailabilityModel.drifting([1, start, 2 * start], np.stack([before, before, after]))


def _drift_cell(config: ExperimentConfig, drift: float, window: int, rng: np.random.Generator):
    n = config.n_clients
    model = drifting_population(n, drift)
    horizon = DRIFT_START + window
    available = simulate(model, horizon, rng)
    estimator = AvailabilityEstimator(n, EstimatorMode.SLIDING_WINDOW, window, config.estimator.floor)
    estimates = np.stack([estimator.observe(available[t - 1], t).copy() for t in range(1, horizon + 1)])
    truth = np.stack([model.mean_at(t) for t in range(1, horizon + 1)])
    diagnostics = window_diagnostics(truth, estimates, DRIFT_START + 1, window)
    return diagnostics.total, windowed_participation_error(truth, estimates, DRIFT_START + 1, window)


def _drift_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    totals, errors, cells = [], [], []
    for i, drift in enumerate(DRIFTS):
        for j, window in enumerate(WINDOWS):
            samples = [_drift_cell(config, drift, window, _check_rng(config, i, j, s)) for s in range(DRIFT_SEEDS)]
            total, error = np.mean(samples, axis=0)
            totals.append(total)
            errors.append(error)
            cells.append(f"d={drift:g},W={window}: {total:.3g}/{error:.3g}")
            logger.debug("Drift cell d=%g W=%d: eps+Delta=%.4g, participation error=%.4g.", drift, window, total, error)
    rho = float(stats.spearmanr(totals, errors)[0])
    return [Check("error_ranks_with_drift", rho >= 1.0 - 1e-12,
                  f"Spearman rho {rho:.4g} over cells ({'; '.join(cells)})")]


# Surrogate bias and descent bounds
SURROGATE_TRIALS = 1000


def _random_bias_trial(rng: np.random.Generator):
    cfg = SurrogateConfig(eta0=float(rng.uniform(0.1, 1.0)), decay=float(rng.uniform(0.1, 1.0)),
                          epsilon=float(rng.uniform(0.01, 0.5)))
    missing = int(rng.integers(1, 9))
    dimension = int(rng.integers(1, 6))
    staleness = rng.integers(1, 21, missing)
    truth = rng.standard_normal((missing, dimension))
    direction = rng.standard_normal((missing, dimension))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    error = direction * (cfg.epsilon * rng.random((missing, 1)))
    return bias_and_bound(truth, truth + error, reliability(staleness, cfg), cfg, staleness)


def _surrogate_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    example = exponential_bias_bound([1, 2], SurrogateConfig(eta0=1.0, decay=0.5, epsilon=0.1))
    expected = 0.1 * (math.exp(-0.5) + math.exp(-1.0))
    checks = [Check("exponential_bound_example", abs(example - expected) <= 1e-6 and abs(example - 0.097441) <= 1e-6,
                    f"bound {example:.6f} for staleness (1, 2)")]

    rng = _check_rng(config, 0)
    reports = [_random_bias_trial(rng) for _ in range(SURROGATE_TRIALS)]
    violations = sum(not report.holds() or report.norm > report.exponential_bound + 1e-12 for report in reports)
    checks.append(Check("bias_within_bound", violations == 0,
                        f"{violations} of {SURROGATE_TRIALS} randomized trials exceed eps * sum(beta)"))

    simulation = engine.Simulation(config, config.seed, record_trajectory=True)
    result = simulation.run()
    objective = simulation.arms["fair"].workload.objective
    report = verify_descent_bounds(result.trajectory, objective, config.workload.trainer())
    checks.append(Check("descent_bounds_hold", report.ok and report.rounds_checked > 0,
                        f"{report.rounds} rounds, {report.angle_failures} without the angle condition, "
                        f"{report.descent_violations} progress and {report.gap_violations} gap violations"))
    return checks


# Dual-arm comparisons
def _comparison_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    finals = [(result.final("fair"), result.final("vanilla")) for result in results]
    checks = [
        _share_check("fair_lower_utility_cv", [f.utility_cv < v.utility_cv for f, v in finals], 0.9,
                     "fair utility CV below vanilla"),
        _share_check("fair_higher_jain_utility", [f.jain_utility > v.jain_utility for f, v in finals], 0.9,
                     "fair Jain(utility) above vanilla"),
        _share_check("fair_lower_selection_gap", [f.selgap_share < v.selgap_share for f, v in finals], 0.9,
                     "fair selection gap below vanilla"),
        _share_check("fair_lower_gini", [f.gini < v.gini for f, v in finals], 0.9, "fair Gini below vanilla"),
    ]
    without = replace(config, surrogate=replace(config.surrogate, enabled=False))
    plain = engine.run_replicates(without)
    pairs = [(result.final("fair"), other.final("fair")) for result, other in zip(results, plain)]
    checks.append(_share_check("surrogates_lower_utility_cv", [s.utility_cv < p.utility_cv for s, p in pairs], 0.75,
                               "with-surrogate utility CV below no-surrogate"))
    same = [s.selgap_share == p.selgap_share and s.gini == p.gini for s, p in pairs]
    checks.append(_share_check("surrogates_keep_selection", same, 1.0, "identical selection gap and Gini"))
    return checks


TREND_ROUNDS = (100,)


def _variance_comparison(results: List[engine.RunResult], t: int, suffix: str) -> List[Check]:
    """Mean and per-seed sign test of fair against vanilla fairness variance at round ``t``."""
    fair = np.array([result.at(t, "fair").fairness_variance for result in results])
    vanilla = np.array([result.at(t, "vanilla").fairness_variance for result in results])
    wins = int(np.sum(fair < vanilla))
    pvalue = float(stats.binomtest(wins, len(results), 0.5, alternative="greater").pvalue)
    return [
        Check(f"fair_variance_below_vanilla{suffix}", fair.mean() < vanilla.mean(),
              f"mean V_{t} fair {fair.mean():.4g} vs vanilla {vanilla.mean():.4g}"),
        Check(f"sign_test{suffix}", pvalue < 0.05,
              f"fair below vanilla at t={t} in {wins}/{len(results)} seeds, p = {pvalue:.3g}"),
    ]


def _trend_checks(config: ExperimentConfig, results: List[engine.RunResult]) -> List[Check]:
    checks = []
    for t in TREND_ROUNDS:
        if t < config.rounds:
            checks.extend(_variance_comparison(results, t, f"_at_{t}"))
    checks.extend(_variance_comparison(results, config.rounds, ""))
    fair = np.stack([result.series("fair", "fairness_variance") for result in results])
    vanilla = np.stack([result.series("vanilla", "fairness_variance") for result in results])
    rounds = np.array([record.t for record in results[0].records])
    rho = float(stats.spearmanr(rounds, vanilla.mean(axis=0))[0])
    checks.append(Check("vanilla_variance_grows", rho > 0.9, f"Spearman rho of mean vanilla V_t over t is {rho:.4g}"))
    half = rounds.size // 2
    curve = fair.mean(axis=0)
    first, second = float(curve[:half].max()), float(curve[half:].max())
    checks.append(Check("fair_variance_bounded", second <= 2.0 * first,
                        f"max mean fair V_t {second:.4g} in the second half vs {first:.4g} in the first"))
    return checks


def _synthetic(**options) -> Dict[str, Any]:
    return {"kind": "synthetic", **options}


PRESETS: Dict[str, ScenarioPreset] = {preset.name: preset for preset in (
    ScenarioPreset(
        "lemma1_convergence",
        "Availability-only accrual: u_k/(pi_k T) tends to mu_k and V_T/T^2 vanishes.",
        {
            "n_clients": 10, "clients_per_round": 1, "rounds": 10000, "seed": 0, "replicates": 20, "workers": 4,
            "metrics_every": 100,
            "accrual": "availability_only", "normalization": "true_pi",
            "availability": {"kind": "bernoulli", "pi_linspace": [0.2, 1.0]},
            "selection": {"kind": "inverse_availability", "mode": "sample_proportional"},
            "workload": _synthetic(mu_constant=0.5, bound=1.0, noise="uniform_bounded", sigma=0.3),
        },
        _convergence_checks,
    ),
    ScenarioPreset(
        "lemma2_parity",
        "Inverse-availability sampling equalizes long-run selection frequencies.",
        {
            "n_clients": 100, "clients_per_round": 10, "rounds": 5000, "seed": 0, "replicates": 20, "workers": 4,
            "metrics_every": 100,
            "availability": {"kind": "bernoulli", "pi_uniform": [0.1, 1.0]},
            "estimator": {"mode": "running_mean"},
            "selection": {"kind": "inverse_availability", "mode": "inclusion_proportional"},
            "workload": _synthetic(mu_constant=0.5),
        },
        _parity_checks,
    ),
    ScenarioPreset(
        "theorem2_limits",
        "Normalized reactive weights converge to their closed-form limits.",
        {
            "n_clients": 10, "clients_per_round": 2, "rounds": 2000, "seed": 0,
            "availability": {"kind": "bernoulli", "pi_linspace": [0.3, 0.7]},
            "selection": {"kind": "reactive_reweight", "mode": "sample_proportional", "lambda": 0.7,
                          "epsilon": 0.01},
            "workload": _synthetic(mu_constant=0.5),
        },
        _limit_checks,
    ),
    ScenarioPreset(
        "appendix_a_identity",
        "Idealized selection matches the closed-form normalized utilities and their deviation bound.",
        {
            "n_clients": 10, "clients_per_round": 1, "rounds": 2000, "seed": 0, "normalization": "true_pi",
            "availability": {"kind": "bernoulli", "pi_linspace": [0.1, 1.0]},
            "selection": {"kind": "inverse_availability", "mode": "sample_proportional"},
            "workload": _synthetic(mu_linspace=[0.2, 0.8], bound=1.0, noise="uniform_bounded", sigma=0.2),
        },
        _identity_checks,
    ),
    ScenarioPreset(
        "appendix_c_drift",
        "Participation error under drifting availability ranks with the tracking error plus drift.",
        {
            "n_clients": 10, "clients_per_round": 2, "rounds": 400, "seed": 0,
            "availability": {"kind": "drifting", "schedule": {
                "rounds": [1, 200, 400],
                "values": [[0.05] * 5 + [0.95] * 5, [0.05] * 5 + [0.95] * 5, [0.95] * 5 + [0.05] * 5],
            }},
            "estimator": {"mode": "sliding_window", "window": 100},
            "selection": {"kind": "inverse_availability", "mode": "sample_proportional"},
            "workload": _synthetic(mu_constant=0.5),
        },
        _drift_checks,
    ),
    ScenarioPreset(
        "surrogate_bounds",
        "Surrogate bias stays within its bounds and stale-gradient steps satisfy the descent inequalities.",
        {
            "n_clients": 20, "clients_per_round": 4, "rounds": 1000, "seed": 0,
            "availability": {"kind": "bernoulli", "pi_groups": [[10, 0.3], [10, 0.9]]},
            "selection": {"kind": "reactive_reweight", "mode": "inclusion_proportional", "lambda": 0.7},
            "workload": {
                "kind": "quadratic", "dimension": 2, "spread": 0.2, "curvature": 1.0, "initial": [0.0, 1.0],
                "clusters": [{"count": 10, "center": [-1.0, 0.0]}, {"count": 10, "center": [1.0, 0.0]}],
                "step_size": 0.1, "local_epochs": 2, "angle": 0.5, "bound": 1.0,
            },
            "surrogate": {"enabled": True, "eta0": 1.0, "decay": 0.5, "epsilon": 0.1},
        },
        _surrogate_checks,
    ),
    ScenarioPreset(
        "table2_comparison",
        "Fair versus random selection on a two-group quadratic federation, with and without surrogates.",
        {
            "n_clients": 100, "clients_per_round": 25, "rounds": 50, "seed": 0, "replicates": 20,
            "accrual": "availability_only", "normalization": "estimated_pi",
            "availability": {"kind": "bernoulli", "pi_groups": [[50, 0.2], [50, 0.9]]},
            "estimator": {"mode": "running_mean"},
            "selection": {"kind": "reactive_reweight", "mode": "inclusion_proportional", "lambda": 0.7},
            "workload": {
                "kind": "quadratic", "dimension": 2, "spread": 0.1, "curvature": 1.0, "initial": [0.0, 1.0],
                "clusters": [{"count": 50, "center": [-1.0, 0.0]}, {"count": 50, "center": [1.0, 0.0]}],
                "step_size": 0.1, "local_epochs": 1, "bound": 1.0, "utility_signal": "global_benefit",
            },
            "surrogate": {"enabled": True, "eta0": 0.5, "decay": 0.5, "epsilon": 0.1},
        },
        _comparison_checks,
    ),
    ScenarioPreset(
        "figs34_trend",
        "Fairness variance over rounds: growing for random selection, bounded for utility compensation.",
        {
            "n_clients": 10, "clients_per_round": 2, "rounds": 1000, "seed": 0, "replicates": 20,
            "normalization": "estimated_pi",
            "availability": {"kind": "bernoulli", "pi_groups": [[5, 0.2], [5, 0.9]]},
            "selection": {"kind": "utility_compensated", "mode": "top_k"},
            "workload": _synthetic(mu_constant=1.0, bound=1.0),
        },
        _trend_checks,
    ),
)}


def get_preset(name: str) -> ScenarioPreset:
    """
    Raises
    ------
        ConfigError: If no preset has this name.
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}") from None


def run_preset(name: str, seed: Optional[int] = None, out_dir: Optional[Union[str, Path]] = None,
               workers: Optional[int] = None, profile: bool = False) -> PresetReport:
    """
    Run a preset and evaluate its checks.

    Outputs go to ``out_dir``, or to ``<default output>/<name>``; see
    :func:`fairfed.config.resolve_output_dir`.

    Parameters
    ----------
        name: str
            Preset name.

        seed: int, optional
            Overrides the preset's base seed.

        out_dir: str or pathlib.Path, optional
            Output directory.

        workers: int, optional
            Processes for the replicates.

        profile: bool, optional
            Write ``profile.txt``.

    Returns
    -------
        report: PresetReport
            Failed checks do not raise here; see :meth:`PresetReport.raise_for_failures`.
    """
    preset = get_preset(name)
    config = preset.config().with_overrides(seed=seed, workers=workers, profile=profile or None)
    directory = Path(out_dir) if out_dir is not None else resolve_output_dir(None, config) / name
    logger.info("Preset %s: seed %d, %d replicate(s), output in %s.", name, config.seed, config.replicates, directory)
    results = engine.run(config, directory)
    report = PresetReport(name, config.seed, preset.checks(config, results), results, directory)
    report.write(directory / "report.json")
    for check in report.checks:
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, "Preset %s check %s: %s (%s).", name, check.name, "passed" if check.passed else "FAILED",
                   check.detail)
    return report

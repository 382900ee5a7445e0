"""
Command-line entry point.

.. code-block:: console

    fairfed run --config configs/lemma2_parity.json --seed 3 --out out/
    fairfed preset table2_comparison --seed 0
    fairfed validate --config my_experiment.json
    fairfed summarize --in out/

Exit status: 0 on success, 1 on configuration errors, 2 on runtime failures,
3 when a preset's embedded checks fail.
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import engine
from .__version__ import __version__
from .config import load_config
from .errors import AcceptanceError, ConfigError, FairFedError
from .presets import PRESETS, run_preset

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(name)s:%(funcName)s:%(lineno)s] %(levelname)s: %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfed",
        description="Fairness simulator for federated learning under intermittent client availability.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log per-round detail")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment from a configuration file")
    run.add_argument("--config", required=True, help="JSON configuration file")
    run.add_argument("--seed", type=int, help="base seed, overrides the configuration")
    run.add_argument("--out", help="output directory")
    run.add_argument("--replicates", type=int, help="number of replicates, overrides the configuration")
    run.add_argument("--workers", type=int, help="processes used for replicates")
    run.add_argument("--profile", action="store_true", help="write profile.txt beside the logs")

    preset = commands.add_parser("preset", help="run a named scenario with its embedded checks")
    preset.add_argument("name", nargs="?", help="preset name")
    preset.add_argument("--list", action="store_true", help="list the presets and exit")
    preset.add_argument("--seed", type=int, help="base seed, overrides the preset")
    preset.add_argument("--out", help="output directory")
    preset.add_argument("--workers", type=int, help="processes used for replicates")
    preset.add_argument("--profile", action="store_true", help="write profile.txt beside the logs")

    validate = commands.add_parser("validate", help="check a configuration file without running it")
    validate.add_argument("--config", required=True, help="JSON configuration file")

    summarize = commands.add_parser("summarize", help="summarize the metrics logs of a finished run")
    summarize.add_argument("--in", dest="directory", required=True, help="run output directory")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _print_summary(logs) -> None:
    print(engine.format_summary_table(engine.summarize(logs)))


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config).with_overrides(
        seed=args.seed, replicates=args.replicates, workers=args.workers, profile=args.profile or None)
    results = engine.run(config, args.out)
    _print_summary([result.rows for result in results])
    return EXIT_OK


def _preset(args: argparse.Namespace) -> int:
    if args.list:
        width = max(len(name) for name in PRESETS)
        for name, preset in PRESETS.items():
            print(f"{name:<{width}}  {preset.description}")
        return EXIT_OK
    if args.name is None:
        raise ConfigError("preset", f"a preset name is required; choose one of {', '.join(PRESETS)}")
    report = run_preset(args.name, args.seed, args.out, args.workers, args.profile)
    if len(report.results) > 1:
        _print_summary([result.rows for result in report.results])
    print(report.format())
    report.raise_for_failures()
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"{args.config}: valid ({config.n_clients} clients, m={config.clients_per_round}, "
          f"T={config.rounds}, {config.replicates} replicate(s))")
    return EXIT_OK


def _summarize(args: argparse.Namespace) -> int:
    try:
        logs = engine.collect_logs(args.directory)
    except FileNotFoundError as error:
        raise ConfigError("in", str(error)) from None
    _print_summary(logs)
    return EXIT_OK


COMMANDS = {"run": _run, "preset": _preset, "validate": _validate, "summarize": _summarize}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and execute the subcommand.

    Returns
    -------
        status: int
            The process exit status.
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as error:
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except AcceptanceError as error:
        print(f"acceptance failure: {error}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (FairFedError, OSError) as error:
        logger.debug("Run failed.", exc_info=True)
        print(f"run failed: {error}", file=sys.stderr)
        return EXIT_RUNTIME

from .__version__ import __version__
from .config import ExperimentConfig, load_config
from .engine import RunResult, Simulation, run, summarize
from .errors import (AcceptanceError, ConfigError, ContractViolationError, DegenerateLimitError,
                     DimensionMismatchError, EmptySelectionError, FairFedError, OutOfRangeError, TraceParseError,
                     UndefinedInputError)
from .presets import PRESETS, run_preset

__all__ = [
    "__version__",
    "AcceptanceError",
    "ConfigError",
    "ContractViolationError",
    "DegenerateLimitError",
    "DimensionMismatchError",
    "EmptySelectionError",
    "ExperimentConfig",
    "FairFedError",
    "OutOfRangeError",
    "PRESETS",
    "RunResult",
    "Simulation",
    "TraceParseError",
    "UndefinedInputError",
    "availability",
    "load_config",
    "metrics",
    "profiling",
    "run",
    "run_preset",
    "selection",
    "summarize",
    "surrogate",
    "toyfl",
    "utility",
]

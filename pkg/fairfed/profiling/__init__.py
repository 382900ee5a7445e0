from .decorator import Decorator
from .gauges import Gauge, ResidentMemory, WallClock
from .stage_profiler import StageProfiler

__all__ = [
    "Decorator",
    "Gauge",
    "ResidentMemory",
    "StageProfiler",
    "WallClock",
]

import logging
import time
import types
from typing import Dict, List, Optional, Sequence, Type, Union

from .decorator import Decorator
from .gauges import Gauge, ResidentMemory, WallClock

logger = logging.getLogger(__name__)


class StageProfiler(Decorator):
    """
    Decorator that measures every call of the stages it wraps.

    Each wrapped function is a *stage*. Every call records its offset from the
    profiler's creation, the stage index and one value per connected
    :class:`Gauge`. Stages are identified by the function object and named in
    reports through :attr:`label_format`.

    Three report formats exist:

    .. code-block:: console

        chronological:
            [+0.0012s] - [observe] - runtime : 0m 0.0001s - rss delta : 0MB 0KB
        stage:
            [observe]
                [+0.0012s] - runtime : 0m 0.0001s - rss delta : 0MB 0KB
        cumulative:
            [observe] - 100 calls - runtime : 0m 0.0143s - rss delta : 0MB 12KB

    Parameters
    ----------
        gauges: Gauge subclass or list of them, optional
            Quantities to measure. Default value is ``[WallClock, ResidentMemory]``.

        report_format: str, optional
            One of "chronological", "stage", "cumulative".
            Default value is "cumulative".

    Properties
    ----------
        report_format: str
            Get and set the report format.

        stages: list of callable
            The functions profiled so far, in order of first call.

        records: list
            ``[offset, stage_index, {gauge_index: value}]`` per call.
    """
    report_formats = ("chronological", "stage", "cumulative")

    def __init__(self, gauges: Union[Type[Gauge], List[Type[Gauge]], None] = None,
                 report_format: str = "cumulative", **kwargs):
        super().__init__(**kwargs)
        self._gauges: List[Gauge] = []
        self.connect(gauges if gauges is not None else [WallClock, ResidentMemory])
        self.report_format = report_format
        self.reset()

    @property
    def report_format(self) -> str:
        return self._report_format

    @report_format.setter
    def report_format(self, report_format: str) -> None:
        if not isinstance(report_format, str):
            raise TypeError("The report format must be a string.")
        if report_format not in self.report_formats:
            raise ValueError(f"The report format must be one of {self.report_formats}.")
        self._report_format = report_format

    @property
    def stages(self) -> List:
        return list(self._stages)

    @property
    def records(self) -> List[list]:
        return list(self._records)

    @property
    def gauges(self) -> List[Gauge]:
        return list(self._gauges)

    def connect(self, gauges: Union[Type[Gauge], List[Type[Gauge]], None]) -> None:
        """
        Connect gauge classes; one instance of each is kept. ``None`` and
        already connected classes are ignored.

        Raises
        ------
            TypeError: If an item is not a :class:`Gauge` subclass.
        """
        if isinstance(gauges, (list, tuple)):
            for gauge in gauges:
                self.connect(gauge)
            return
        if gauges is None:
            return
        if not (isinstance(gauges, type) and issubclass(gauges, Gauge)):
            raise TypeError("Gauges must be subclasses of Gauge.")
        if not any(isinstance(gauge, gauges) for gauge in self._gauges):
            self._gauges.append(gauges())

    def reset(self) -> None:
        """Forget every record; connected gauges are kept."""
        self._origin = time.perf_counter()
        self._stages: List = []
        self._records: List[list] = []

    def _stage_index(self, func) -> int:
        for index, stage in enumerate(self._stages):
            if stage is func:
                return index
        self._stages.append(func)
        return len(self._stages) - 1

    def _wrapper(self, func, *args, **kwargs):
        offset = time.perf_counter() - self._origin
        index = self._stage_index(func)
        for gauge in self._gauges:
            gauge.start()
        outputs = func(*args, **kwargs)
        for gauge in reversed(self._gauges):
            gauge.stop()
        self._records.append([offset, index, {i: gauge.result() for i, gauge in enumerate(self._gauges)}])
        return outputs

    def attach(self, instance, methods: Optional[Sequence[str]] = None):
        """
        Wrap methods of one instance in place and return the instance.

        Only plain functions defined on the instance's class are wrapped, and
        special methods only when listed explicitly.

        Parameters
        ----------
            instance: object
                The object whose bound methods are replaced.

            methods: sequence of str, optional
                Method names to wrap. Default value is every public method.

        Raises
        ------
            TypeError: If ``methods`` is not a sequence of strings.
        """
        if methods is not None and (isinstance(methods, str) or not all(isinstance(m, str) for m in methods)):
            raise TypeError("Parameter methods must be a list of method names or None.")
        for name, value in vars(type(instance)).items():
            if not isinstance(value, types.FunctionType):
                continue
            if methods is None and name.startswith("_"):
                continue
            if methods is not None and name not in methods:
                continue
            setattr(instance, name, self(types.MethodType(value, instance)))
        return instance

    def _format_values(self, values: Dict[int, float]) -> str:
        return "".join(f" - {self._gauges[i].format_result(value)}" for i, value in values.items())

    def report_chronological(self) -> str:
        lines = []
        for offset, index, values in self._records:
            lines.append(f"[+{offset:.4f}s] - [{self.get_label(self._stages[index])}]{self._format_values(values)}")
        return "\n".join(lines) + ("\n" if lines else "")

    def _by_stage(self) -> Dict[int, List[list]]:
        grouped: Dict[int, List[list]] = {}
        for offset, index, values in self._records:
            grouped.setdefault(index, []).append([offset, values])
        return grouped

    def report_stage(self) -> str:
        lines = []
        for index, calls in self._by_stage().items():
            lines.append(f"[{self.get_label(self._stages[index])}]")
            for offset, values in calls:
                lines.append(f"\t[+{offset:.4f}s]{self._format_values(values)}")
        return "\n".join(lines) + ("\n" if lines else "")

    def report_cumulative(self) -> str:
        lines = []
        for index, calls in self._by_stage().items():
            totals: Dict[int, float] = {}
            for _, values in calls:
                for i, value in values.items():
                    totals[i] = totals.get(i, 0) + value
            lines.append(f"[{self.get_label(self._stages[index])}] - {len(calls)} calls{self._format_values(totals)}")
        return "\n".join(lines) + ("\n" if lines else "")

    def report(self) -> str:
        """The report in the current :attr:`report_format`."""
        return getattr(self, f"report_{self._report_format}")()

    def write_report(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.report())
        logger.info("Profile written to %s.", path)

    def __str__(self) -> str:
        return self.report()

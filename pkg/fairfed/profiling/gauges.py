import time

import psutil


class Gauge(object):
    """
    One quantity measured around a profiled call.

    Subclasses implement:

    .. code-block:: python

        def start(self) -> None: ...
        def stop(self) -> None: ...
        def result(self): ...
        def format_value(self, value) -> str: ...

    and set ``quantity``, the name printed in reports. Results must be
    numeric so cumulative reports can add them.
    """
    quantity: str = None

    def start(self) -> None:
        raise NotImplementedError("Method start must be implemented in subclasses.")

    def stop(self) -> None:
        raise NotImplementedError("Method stop must be implemented in subclasses.")

    def result(self):
        raise NotImplementedError("Method result must be implemented in subclasses.")

    def format_value(self, value) -> str:
        raise NotImplementedError("Method format_value must be implemented in subclasses.")

    def format_result(self, value) -> str:
        return f"{self.quantity} : {self.format_value(value)}"


class WallClock(Gauge):
    """
    Elapsed wall-clock seconds, from :func:`time.perf_counter`.
    """
    quantity: str = "runtime"

    def start(self) -> None:
        self._tic = time.perf_counter()

    def stop(self) -> None:
        self._toc = time.perf_counter()

    def result(self) -> float:
        return self._toc - self._tic

    def format_value(self, value) -> str:
        if not isinstance(value, (float, int)):
            raise TypeError("A runtime must be numeric.")
        minutes, seconds = divmod(value, 60)
        return f"{int(minutes)}m {seconds:.4f}s"


class ResidentMemory(Gauge):
    """
    Change of the process resident set size, in bytes, read with ``psutil``.

    .. note::

        The delta can be negative when memory is released during the call.
    """
    quantity: str = "rss delta"

    def __init__(self):
        self._process = psutil.Process()

    def start(self) -> None:
        self._before = self._process.memory_info().rss

    def stop(self) -> None:
        self._after = self._process.memory_info().rss

    def result(self) -> int:
        return self._after - self._before

    def format_value(self, value) -> str:
        if not isinstance(value, int):
            raise TypeError("A memory delta must be an integer.")
        sign = "-" if value < 0 else ""
        megabytes, remainder = divmod(abs(value), 1024 ** 2)
        kilobytes, _ = divmod(remainder, 1024)
        return f"{sign}{megabytes}MB {kilobytes}KB"

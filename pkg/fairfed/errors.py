"""
Exception hierarchy of ``fairfed``.

Every error raised on purpose by the package derives from :class:`FairFedError`.
Most subclasses also derive from the built-in exception a caller would catch
for the same mistake (``ValueError``, ``IndexError``), so generic handlers keep
working.
"""


class FairFedError(Exception):
    """Root of all ``fairfed`` errors."""


class ConfigError(FairFedError, ValueError):
    """
    Invalid or unreadable experiment configuration.

    The message starts with the dotted path of the offending field, for example
    ``selection.lambda: must be >= 0``.

    Parameters
    ----------
        field: str
            Dotted path of the field.

        reason: str
            What is wrong with it.
    """

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class TraceParseError(FairFedError, ValueError):
    """
    Malformed row in a device availability trace.

    Parameters
    ----------
        line_number: int
            1-based line of the offending row.

        reason: str
            Description of the problem.
    """

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class OutOfRangeError(FairFedError, IndexError):
    """A round or window lies outside the recorded timeline."""


class ContractViolationError(FairFedError, ValueError):
    """An operation was called with inputs breaking its pre-conditions."""


class EmptySelectionError(FairFedError, ValueError):
    """Weights cannot be normalized because the client set carries no mass."""


class DegenerateLimitError(FairFedError, ValueError):
    """The reactive weight limit does not exist for the given availabilities."""


class UndefinedInputError(FairFedError, ValueError):
    """A metric is undefined on the given input."""


class DimensionMismatchError(FairFedError, ValueError):
    """Signal or model vectors have incompatible dimensions."""


class AcceptanceError(FairFedError):
    """
    One or more embedded checks of a scenario preset failed.

    Parameters
    ----------
        preset: str
            Name of the preset.

        failed: list of str
            Names of the failed checks.
    """

    def __init__(self, preset: str, failed):
        self.preset = preset
        self.failed = list(failed)
        super().__init__(f"preset {preset}: failed checks {', '.join(self.failed)}")

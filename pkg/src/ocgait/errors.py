"""Exception types shared across the package."""


class OcgaitError(Exception):
    """Base class for all library errors."""


class DataError(OcgaitError):
    """Bad input data, files, or configuration; CLI exit code 2."""


class ParseError(DataError):
    """Unreadable file content. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """File parsed but violates the expected schema or invariants."""


class InvalidConfig(DataError):
    """A configuration value is outside its allowed range."""


class ConfigError(DataError):
    """Unknown or malformed key in a config file."""


class MissingArtifacts(DataError):
    """A report directory contains none of the expected run outputs."""


class DatasetTooSmall(DataError):
    """Too few examples to train on."""


class NoMinimumFound(OcgaitError):
    """A required local minimum is absent from the signal."""


class SegmentTooShort(OcgaitError):
    """A cropped stride segment has too few samples."""


class TooShort(OcgaitError):
    """Sequence shorter than the operation requires."""


class EmptySequence(OcgaitError):
    """Operation received an empty sequence."""


class TooLarge(OcgaitError):
    """Input exceeds the tractable size bound of an exhaustive routine."""


class WindowOutOfBounds(OcgaitError):
    """Sliding-window parameters violate the feasibility constraints."""


class NoFeasibleWindow(OcgaitError):
    """No window start/scale combination satisfies the constraints."""


class ShapeMismatch(OcgaitError):
    """Input vector length does not match the network input width."""


class DegenerateRange(OcgaitError):
    """Ground-truth signal is constant; range-normalized metrics undefined."""


class UsageError(OcgaitError):
    """Bad command-line invocation; CLI exit code 1."""

    def __init__(self, message: str, usage: str = ""):
        self.usage = usage
        super().__init__(message)

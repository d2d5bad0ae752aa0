"""Exception taxonomy shared across the package."""


class DriftGateError(Exception):
    """Base class for every error this package raises deliberately."""


class NonFiniteInput(DriftGateError):
    """An input array contains NaN or infinite entries."""


class SingularCovariance(DriftGateError):
    """Covariance factorization failed even after regularization."""


class ZeroVector(DriftGateError):
    """Cosine similarity is undefined for a zero-norm vector."""


class EmptyInput(DriftGateError):
    """An operation that needs at least one element received none."""


class InvalidProbabilityRow(DriftGateError):
    """A replicate row is not a usable probability vector."""


class DegenerateLabels(DriftGateError):
    """Labels contain only one outcome, so the statistic is undefined."""


class MissingClass(DriftGateError):
    """A required class is absent from the labels."""


class ZeroBaseline(DriftGateError):
    """Percent change against a zero baseline is undefined."""


class ParseError(DriftGateError):
    """A file could not be parsed; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionMismatch(DriftGateError):
    """Loaded data does not match the expected feature dimension."""


class RepCountMismatch(DriftGateError):
    """Replicate counts differ from the required uniform count."""


class ConfigError(DriftGateError):
    """A configuration value is out of range or unrecognized."""

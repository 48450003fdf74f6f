"""Exception hierarchy shared by every module of the package."""


class ThresholdLabError(Exception):
    """Base class for all package errors."""


class NonFiniteEval(ThresholdLabError):
    """A closure evaluation produced inf or nan."""


class EmptySigma(ThresholdLabError):
    """No root of f(u) - u was found in the scanned interval."""


class DegenerateSigma(EmptySigma):
    """f(u) - u vanishes identically on the scanned interval."""


class NoContraction(ThresholdLabError):
    """The equilibrium map is not a certified contraction on the box."""


class MaxIterExceeded(ThresholdLabError):
    """A fixed-point iteration stalled above its tolerance."""


class SignChange(ThresholdLabError):
    """f(u) - u vanishes between the two endpoints of a quadrature."""


class OutOfCoverage(ThresholdLabError):
    """A field query fell outside the stored space-time domain."""


class InsufficientSamples(ThresholdLabError):
    """Too few samples inside the blow-up window to fit a rate."""


class CflCollapse(ThresholdLabError):
    """The CFL time step fell below the collapse threshold."""


class NonFiniteState(ThresholdLabError):
    """A solver step produced a non-finite cell value."""


class InvalidData(ThresholdLabError):
    """Initial data violates a standing assumption (e.g. negative density)."""


class HypothesisFailed(ThresholdLabError):
    """A premise needed for a bound does not hold.

    ``failed`` lists the names of the broken premises.
    """

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class ConfigError(ThresholdLabError):
    """Base class for scenario configuration problems."""


class ParseError(ConfigError):
    """Malformed JSON or an unrecognised field value."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class ValidationError(ConfigError):
    """A config parsed but violates an invariant."""

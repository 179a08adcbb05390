"""Exception types raised across the package."""


class MixseriesError(Exception):
    """Base class for all package errors."""


class OrthonormalityLost(MixseriesError):
    """Built polynomials fail the orthonormality check at the requested precision."""


class IndexOutOfRange(MixseriesError, IndexError):
    pass


class PointOutsideInterval(MixseriesError, ValueError):
    pass


class ParameterOutOfRange(MixseriesError, ValueError):
    pass


class GammaTableOverflow(MixseriesError, OverflowError):
    pass


class BasisMismatch(MixseriesError, ValueError):
    pass


class InvalidA(MixseriesError, ValueError):
    pass


class InvalidDensity(MixseriesError, ValueError):
    pass


class DegenerateEstimate(MixseriesError, ValueError):
    pass


class EnvelopeViolation(MixseriesError, RuntimeError):
    pass


class DataFormatError(MixseriesError, ValueError):
    """Malformed input data file; the message carries the line number."""


class UsageError(MixseriesError):
    """Bad command line or config file."""


class ExperimentError(MixseriesError):
    """Failure inside a simulation cell, annotated with (n, replication)."""

    def __init__(self, n, replication, cause):
        self.n = n
        self.replication = replication
        self.cause = cause
        super().__init__(f"n={n} replication={replication}: {type(cause).__name__}: {cause}")

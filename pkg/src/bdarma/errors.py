"""Exception types shared across the package."""


class BdarmaError(Exception):
    """Base class for all package-specific errors."""


class InvalidCompositionError(BdarmaError, ValueError):
    """A vector is not a valid simplex point (nonpositive entry or bad sum)."""


class ShapeError(BdarmaError, ValueError):
    """An array argument has an incompatible shape."""


class LikelihoodError(BdarmaError, FloatingPointError):
    """A non-finite intermediate arose while evaluating the likelihood.

    Carries the time index of the offending observation so callers can
    report which row of the series triggered the failure.
    """

    def __init__(self, message: str, t: int | None = None):
        super().__init__(message)
        self.t = t


class PrecisionOverflowError(LikelihoodError):
    """The precision exponent left the representable range (|z_t . gamma| > 700)."""


class ConfigError(BdarmaError, ValueError):
    """A configuration object failed validation."""


class StudyError(BdarmaError, RuntimeError):
    """A study run could not produce trustworthy aggregates."""


class SamplerError(BdarmaError, RuntimeError):
    """The sampler could not make progress (e.g. no finite starting point)."""


class IngestError(BdarmaError, ValueError):
    """Raw input data failed validation.

    ``rows`` holds (row_identifier, message) pairs describing every offending
    record, so a single pass reports all problems at once.
    """

    def __init__(self, message: str, rows: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.rows = rows or []

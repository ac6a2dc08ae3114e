"""Exception types shared across the package."""


class DpmfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(DpmfError):
    """Vector or matrix dimensions do not agree."""

    def __init__(self, message, expected=None, got=None):
        super().__init__(message)
        self.expected = expected
        self.got = got


class InvalidParameterError(DpmfError):
    """A parameter or input violates its domain constraints."""


class CholeskyError(DpmfError):
    """Factorization failed even at the largest jitter level."""


class InvalidStateError(DpmfError):
    """A sampler state is unusable, e.g. non-finite log likelihood."""


class SliceError(DpmfError):
    """A slice sampling bracket failed to produce an acceptable point."""


class DataFormatError(DpmfError):
    """An input file violates the documented schema."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

"""Exception and warning types shared across the package."""


class SobolStreamError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SobolStreamError, ValueError):
    """Input data is malformed: wrong shape, non-finite values, bad rows."""


class ParameterError(SobolStreamError, ValueError):
    """A configuration parameter is out of its valid range."""


class DegeneratePartitionError(SobolStreamError, ValueError):
    """The initial samples admit no valid partition (no usable interior edge)."""


class ZeroVarianceError(SobolStreamError, ArithmeticError):
    """Total output variance is zero; sensitivity indices are undefined."""


class InsufficientDataError(SobolStreamError, ValueError):
    """Fewer than two samples seen; variances cannot be formed."""


class NoNegativeIndicesError(SobolStreamError, ValueError):
    """No negative indices available, so the noise level cannot be estimated.

    Callers may fall back to a zero threshold, but should surface an explicit
    warning when they do: with few inputs or very large sample counts the
    absence of negative indices is a genuine diagnostic, not a formality.
    """


class NoClosedFormError(SobolStreamError, ValueError):
    """The requested model has no closed-form indices; use the sampling oracle."""


class DegeneratePartitionWarning(UserWarning):
    """Duplicate interior edges were collapsed, reducing the effective bin count."""

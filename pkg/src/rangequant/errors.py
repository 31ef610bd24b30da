"""Exception hierarchy shared across the package."""


class RangequantError(Exception):
    """Base class for all package-specific errors."""


class ParseError(RangequantError):
    """A data file could not be parsed; the message names the offending line."""


class EmptyInputError(RangequantError):
    """A file or sequence that must carry data is empty."""


class DomainError(RangequantError, ValueError):
    """An input value violates a documented precondition."""


class LengthError(RangequantError, ValueError):
    """An input sequence is too short for the requested operation."""


class AlignmentError(RangequantError):
    """Series cannot be aligned on a common date index."""


class ConfigError(RangequantError):
    """A configuration value or table mismatch makes the request invalid."""


class SingularDesignError(RangequantError):
    """The design matrix is rank deficient."""


class SolverError(RangequantError):
    """An iterative solver failed to converge; diagnostics in the message."""


class BootstrapError(RangequantError):
    """Too many bootstrap replications failed."""


class CovarianceError(RangequantError):
    """A required covariance (sub-)matrix is singular."""


class DegenerateStatisticError(RangequantError):
    """A test statistic is undefined because its variance is zero."""


class DegenerateInputError(RangequantError, ValueError):
    """The input carries no variation where some is required."""

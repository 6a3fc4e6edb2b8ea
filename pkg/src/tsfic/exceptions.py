"""Exception types raised across the toolkit."""


class FocusDomainError(ValueError):
    """A focus transform was evaluated outside its domain."""


class InfeasibleCovarianceError(FocusDomainError):
    """An assembled covariance matrix is not positive definite."""


class DegenerateInputError(ValueError):
    """The observed series carries no usable variation."""


class NumericDegeneracyError(ArithmeticError):
    """A spectral density or covariance became numerically degenerate."""


class SingularInformationError(ArithmeticError):
    """The information matrix J is too ill conditioned to invert."""


class DiagnosticUnavailable(ArithmeticError):
    """A diagnostic statistic has a nonpositive denominator."""


class DesignError(ValueError):
    """A trend design matrix is rank deficient or malformed."""


class PreconditionError(ValueError):
    """Inputs violate the documented preconditions of an operation."""

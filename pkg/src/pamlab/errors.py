"""Exception types shared across the package."""


class PamLabError(Exception):
    """Base class for all package errors."""


class InvalidInput(PamLabError, ValueError):
    """Raised when an argument violates an operation's precondition."""


class BlowUpError(PamLabError, ArithmeticError):
    """The PAM solution exceeded the configured sup-norm cap."""

    def __init__(self, time, norm, cap):
        self.time = time
        self.norm = norm
        self.cap = cap
        super().__init__(
            f"solution norm {norm:.3e} exceeded cap {cap:.1e} at t={time:.6g}"
        )


class DegenerateMeasure(PamLabError, ArithmeticError):
    """A polymer normalisation (denominator) was not strictly positive."""


class SolverFailure(PamLabError, RuntimeError):
    """An iterative eigensolver did not reach the requested residual."""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class UnreliableEstimate(UserWarning):
    """Issued when an importance-sampling estimate has a tiny effective sample size."""

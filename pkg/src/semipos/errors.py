"""Exception types shared across the package."""


class SemiposError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(SemiposError):
    """Structural error: a state/operator does not match its space."""


class DomainError(SemiposError):
    """An argument is outside the mathematical domain of an operation."""


class ParameterError(SemiposError):
    """A model parameter violates one of its stated constraints."""


class CertificationError(SemiposError):
    """Quasi-positivity certification failed: no finite shift can repair a
    negative nonlinearity component on the cone boundary."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class CertificationMismatchError(SemiposError):
    """The shifted integrand dropped below tolerance on a realized state:
    the certified shift is too small for the states the iteration visits."""


class PicardIterationError(SemiposError):
    """Fixed-point iteration exhausted its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PositivityError(SemiposError):
    """A state left the nonnegative cone beyond tolerance."""


class OracleDivergenceError(SemiposError):
    """A reference integrator produced a non-finite state."""

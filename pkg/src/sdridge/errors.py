"""Exception types raised across the package."""


class SDRidgeError(Exception):
    """Base class for all package errors."""


class ParameterError(SDRidgeError, ValueError):
    """An argument is outside its admissible range."""


class DataError(SDRidgeError, ValueError):
    """Input data is malformed, non-finite, or empty after filtering."""


class ParseError(DataError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NumericError(SDRidgeError, ArithmeticError):
    """An iterative solve failed or a numeric guard tripped."""


class DomainError(ParameterError):
    """A closed form was requested outside the domain where it is defined."""


class CorrectionBlowupError(NumericError):
    """GCV correction factor 1 - df/n is numerically zero."""


class ConvexityError(NumericError):
    """Mixed-loss Hessian is not positive definite for the requested weight."""


class TangentIdentityError(NumericError):
    """A smoother family failed the runtime tangent-identity probe."""

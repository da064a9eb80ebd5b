"""Exception hierarchy shared by all gaussmc modules."""


class GaussmcError(Exception):
    """Base class for every error raised by the package."""


class NumericalError(GaussmcError, ArithmeticError):
    """Failure of a numerical routine (CLI exit code 1)."""


class NotPositiveDefinite(NumericalError):
    """Cholesky pivot fell below the relative threshold.

    Usually means the covariance needs a larger ``epsilon``.
    """

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class ValidationError(GaussmcError, ValueError):
    """Invalid input or configuration (CLI exit code 2)."""


class DimensionMismatch(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class TooFewSignals(ValidationError):
    pass


class UserWithSingleRating(ValidationError):
    pass


class InvalidFraction(ValidationError):
    pass


class TooFewUsers(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyPredictions(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed line in a ratings or model file."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DuplicateRatingWarning(UserWarning):
    """A (user, item) pair occurred more than once; the last one is kept."""

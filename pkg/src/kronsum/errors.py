"""Exception types shared across the package."""


class KronsumError(Exception):
    """Base class for all package errors."""


class DimensionError(KronsumError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(KronsumError, ValueError):
    """A scalar function is evaluated outside of its domain."""


class MemoryCapError(KronsumError, MemoryError):
    """A requested object would exceed the configured memory cap."""


class SingularEquationError(KronsumError, ArithmeticError):
    """A (shifted) linear or Sylvester operator is singular."""


class DefectiveMatrixError(KronsumError, ArithmeticError):
    """A matrix is not diagonalizable to working precision."""


class NoValidRegimeError(KronsumError, ValueError):
    """Parameters fall outside every regime of a bound."""


class ContourError(KronsumError, ValueError):
    """A contour does not enclose the relevant spectrum."""


class MatrixMarketError(KronsumError, ValueError):
    """Malformed Matrix Market input.

    Parameters
    ----------
    message : str
    lineno : int, optional
        1-based line number of the offending line.
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno

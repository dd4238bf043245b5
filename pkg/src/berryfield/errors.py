"""Exception types raised across the package."""


class BerryFieldError(Exception):
    """Base class for all package errors."""


class NonHermitianInput(BerryFieldError, ValueError):
    pass


class ConvergenceFailure(BerryFieldError, RuntimeError):
    pass


class ZeroVector(BerryFieldError, ValueError):
    pass


class DimensionMismatch(BerryFieldError, ValueError):
    pass


class UnknownFamily(BerryFieldError, KeyError):
    pass


class NonFiniteInput(BerryFieldError, ValueError):
    pass


class AxisTooShort(BerryFieldError, ValueError):
    pass


class SurfaceOffGrid(BerryFieldError, ValueError):
    pass


class NonAdjacentLoopPoints(BerryFieldError, ValueError):
    pass


class AllPointsDegenerate(BerryFieldError, RuntimeError):
    pass


class GapTooSmall(BerryFieldError, RuntimeError):
    pass


class DegeneratePointOnLoop(BerryFieldError, ValueError):
    pass


class SurfaceTouchesDegeneracy(BerryFieldError, ValueError):
    pass


class ParseError(BerryFieldError, ValueError):
    """Malformed config text; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(BerryFieldError, ValueError):
    """Config is well-formed but semantically invalid; ``key`` names the offender."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

"""Exception hierarchy shared by all thicksmooth modules."""

from __future__ import annotations


class ThickSmoothError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ThickSmoothError, ValueError):
    """Invalid input data or parameters (CLI exit code 2)."""


class NumericGuardError(ThickSmoothError, ArithmeticError):
    """A runtime numerical guard tripped (CLI exit code 3)."""


# geometry
class InvalidRegion(ValidationError):
    pass


class DegenerateTriangle(ValidationError):
    pass


class NonTerminatingRefinement(ThickSmoothError, RuntimeError):
    pass


# kernels / quadrature
class UnsupportedShape(ValidationError):
    pass


class RejectionStall(NumericGuardError):
    pass


class NonFiniteIntegrand(NumericGuardError):
    pass


class InsufficientSamples(ValidationError):
    pass


# operators
class DegreeBelowFloor(NumericGuardError):
    """The degree function dropped below the configured floor.

    ``count`` is the number of offending points and ``locations`` holds their
    coordinates as an ``(count, 2)`` array.
    """

    def __init__(self, message, count=0, locations=None, min_degree=None):
        super().__init__(message)
        self.count = count
        self.locations = locations
        self.min_degree = min_degree


class GridMismatch(ValidationError):
    pass


class QuadratureDominates(NumericGuardError):
    pass


# thickness
class EmptyBall(NumericGuardError):
    pass


# dem_fields
class SchemaError(ValidationError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class InvariantViolation(ValidationError):
    pass

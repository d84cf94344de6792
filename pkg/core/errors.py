"""
Exception hierarchy for the nlcalib workbench.

Every failure mode named by the numerical modules has its own class. Each
class also derives from the closest builtin, so callers that only care about
``ValueError`` or ``RuntimeError`` keep working.
"""

from typing import Any, Optional


class NlcalibError(Exception):
    """Base class of all workbench errors."""


class InvalidParameterError(NlcalibError, ValueError):
    """A family or rule parameter is outside its admissible range."""


class KernelParityError(InvalidParameterError):
    """A kernel that must be even is not."""


class NotApplicableError(NlcalibError, ValueError):
    """A structural check cannot be run on the given spec."""


class TailUnboundedError(NlcalibError, ArithmeticError):
    """The exterior tail cannot be bounded with the declared metadata."""


class NonfiniteIntegrandError(NlcalibError, ArithmeticError):
    """An integrand evaluated to NaN or infinity."""


class InsufficientSmoothnessError(NlcalibError, ValueError):
    """A pointwise operator was requested at a point without a C2 patch."""


class OutOfRegionError(NlcalibError, ValueError):
    """A graph leaves the region covered by a field."""

    def __init__(self, message: str, x: Optional[Any] = None, value: Optional[float] = None):
        super().__init__(message)
        self.x = x
        self.value = value


class NotMonotoneError(NlcalibError, ValueError):
    """A function that must be increasing along an axis is not."""


class TooLargeTError(NlcalibError, ValueError):
    """The sliding height would make leaves jump at the neighborhood boundary."""


class NoTouchError(NlcalibError, ValueError):
    """A test function does not touch the base function."""


class WitnessMissingError(NlcalibError, ValueError):
    """A weak field carries no touching witness."""


class NotConvexError(NlcalibError, ValueError):
    """A convexity-gated oracle was called on a non-convex spec."""


class OrderingViolatedError(NlcalibError, ValueError):
    """Two functions are not ordered or do not touch as required."""


class NoConvergenceError(NlcalibError, RuntimeError):
    """An iteration diverged or ran out of iterations."""


class MonotonicityLostError(NlcalibError, RuntimeError):
    """A computed profile is not strictly increasing."""


class PerimeterInfiniteError(NlcalibError, ArithmeticError):
    """The kernel is too singular for indicator data."""


class NotOnBoundaryError(NlcalibError, ValueError):
    """A point is not on the discrete boundary of a set."""


class ConfigInvalidError(NlcalibError, ValueError):
    """An experiment configuration violates the schema."""

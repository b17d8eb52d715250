"""Exception hierarchy shared by the cellassign modules."""

from __future__ import annotations


class CellAssignError(Exception):
    """Base class for every error raised by this package."""


# scenario
class EmptyAreaError(CellAssignError, ValueError):
    pass


class NonDivisibleError(CellAssignError, ValueError):
    """Phone count is not a multiple of the station count and remainders are disabled."""


class RejectionBudgetExceeded(CellAssignError, RuntimeError):
    """Rejection sampling could not place a phone within its attempt budget."""


# radio
class ZeroDistanceError(CellAssignError, ValueError):
    pass


class GridTooLargeError(CellAssignError, ValueError):
    pass


# qubo
class DimensionMismatchError(CellAssignError, ValueError):
    pass


class LengthMismatchError(CellAssignError, ValueError):
    pass


class UnassignedPhoneError(CellAssignError, ValueError):
    pass


# solvers
class InfeasibleCapacitiesError(CellAssignError, ValueError):
    pass


class TooLargeError(CellAssignError, ValueError):
    """Problem exceeds the exhaustive-enumeration cap."""


# experiments
class ZeroOptimumError(CellAssignError, ZeroDivisionError):
    pass

"""Semantic exceptions raised by the capacity solvers.

Callers that need to distinguish "bad input" from "solver gave up" should
catch the specific subclass; ``CapacityError`` catches everything this
package raises on purpose.
"""


class CapacityError(Exception):
    """Base class for all errors raised by capbound."""


class InvalidChannel(CapacityError, ValueError):
    """Channel matrix fails validation (NaN, negative entries, bad row sums)."""


class DimensionMismatch(CapacityError, ValueError):
    """Vector/matrix shapes are inconsistent."""


class Infeasible(CapacityError):
    """The average-cost constraint cannot be met by any input distribution."""


class NewtonStall(CapacityError):
    """The damped Newton solve for the normalization multipliers failed to converge."""


class AssumptionViolated(CapacityError):
    """A strict-positivity assumption on the (truncated) channel does not hold."""


class InvalidOrder(CapacityError, ValueError):
    """Tail order k outside its admissible range."""


class NeedLargerM(CapacityError):
    """Closed-form tail bound requires a larger truncation level."""


class TailNotComputable(CapacityError):
    """Neither a closed form nor a convergent direct sum is available for the tail."""


class QuadratureNotConverged(CapacityError):
    """Node doubling did not stabilize the integral within the allowed refinements."""


class EpsilonTooLarge(CapacityError, ValueError):
    """Requested accuracy is outside the admissible range of the schedule."""


class BudgetExceeded(CapacityError):
    """No truncation level meets the accuracy target within the iteration cap."""

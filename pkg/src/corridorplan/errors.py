"""Exception types raised by the planner."""


class PlannerError(RuntimeError):
    """Base class for recoverable planning failures."""


class EmptyWorldError(PlannerError):
    """Raised by nearest-neighbor queries on a world with no points."""


class NoPathError(PlannerError):
    """Start and goal lie in disconnected free components of the grid."""


class SphereRejectedError(PlannerError):
    """A sphere came out smaller than the configured minimum radius."""

    def __init__(self, center, radius):
        super().__init__(f"sphere at {list(center)} has radius {radius:.3f}")
        self.center = center
        self.radius = radius


class BatchSampleFailed(PlannerError):
    """Every candidate of a sampling batch was rejected."""


class CorridorError(PlannerError):
    """Corridor generation gave up (retries or sphere budget exhausted)."""


class LineSearchError(PlannerError):
    """Line search could not satisfy the Wolfe conditions."""


class ReplanError(PlannerError):
    """A replan cycle produced no usable trajectory."""

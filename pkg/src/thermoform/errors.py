"""Exception and warning types shared across the package."""


class ThermoformError(Exception):
    """Base class for all package errors."""


class RootNotConverged(ThermoformError):
    """An inverse branch without closed form failed to reach tolerance."""


class BranchBoundary(ThermoformError):
    """A derivative was requested exactly on a partition endpoint."""


class InvalidCover(ThermoformError, ValueError):
    pass


class NotConverged(ThermoformError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"power iteration stalled: residual={residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class NoHyperbolicTimes(ThermoformError):
    pass


class NotExpanding(ThermoformError):
    """Median finite-time expansion statistic is non-negative."""


class BallEscapesBranch(ThermoformError):
    """Pulling a ball back along an itinerary crossed a branch boundary."""


class EmptySubsystem(ThermoformError):
    pass


class CoverIncomplete(ThermoformError):
    pass


class FiberDependence(ThermoformError):
    pass


class ShapeMismatch(ThermoformError, ValueError):
    pass


class ConfigError(ThermoformError, ValueError):
    pass


class NonPrimitiveWarning(UserWarning):
    """The discretized operator is reducible or its iterates oscillate."""


class ReducibleWarning(UserWarning):
    pass


class HeuristicWarning(UserWarning):
    pass

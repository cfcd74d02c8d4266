"""Exception types raised across the package."""


class FaultnetError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(FaultnetError, ValueError):
    pass


class NumericalError(FaultnetError, RuntimeError):
    """A numerical procedure failed to bracket or converge."""


class SolverError(NumericalError):
    pass


class InfeasibleLinkError(FaultnetError, ValueError):
    """A transmitter-receiver pair is farther apart than the radius."""


class UndefinedRateError(FaultnetError, ValueError):
    pass


class RoutingError(FaultnetError, RuntimeError):
    """No path over relay-capable cells joins a flow's endpoints."""

    def __init__(self, flow_id, message=None):
        self.flow_id = flow_id
        super().__init__(message or f"flow {flow_id}: no route over non-empty cells")


class ConfigError(FaultnetError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")

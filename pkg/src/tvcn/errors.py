"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A constructor or operation argument violates its documented constraint."""


class SelectionError(RuntimeError):
    """A weighted node draw has no valid candidate."""


class EvolutionStalledError(RuntimeError):
    """An evolution step could not be completed without breaking connectivity."""


class InsufficientDataError(ValueError):
    """Not enough tail observations for a meaningful exponent estimate."""


class UnknownLinkError(LookupError):
    """Link not present in the snapshot."""


class UnreachableError(RuntimeError):
    """No path between the requested endpoints."""


class ConsistencyError(ValueError):
    """A route references links that are not in the snapshot."""


class FluidDivergenceError(RuntimeError):
    """The fluid equilibrium solver exhausted its iteration budget."""

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


class DegenerateCapacityError(ValueError):
    """A route has zero forwarding capacity."""


class DegenerateDelayError(ValueError):
    """A total delay is non-positive where a positive value is required."""


class DomainError(ValueError):
    """Utility function evaluated outside its domain."""


class SingularRateError(ValueError):
    """A rate of zero makes the requested matrix undefined."""


class SingularMatrixError(ValueError):
    """A pivot fell below the singularity threshold during elimination."""

    def __init__(self, message, links=None):
        super().__init__(message)
        self.links = tuple(links) if links is not None else None


class BoundaryCrossingError(RuntimeError):
    """A finite-difference stencil straddles a change of the congested set."""


class ShapeError(ValueError):
    """Matrix input has an unsupported shape."""


class PlacementError(RuntimeError):
    """Not enough eligible nodes to place the requested users."""


class ConfigError(ValueError):
    """Scenario configuration is malformed or violates an invariant."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class EmissionError(OSError):
    """Report files could not be written; partial outputs were removed."""

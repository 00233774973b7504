"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator-specific errors."""


class ConfigError(SimulationError):
    """Malformed or inconsistent scenario configuration."""


class PlacementError(SimulationError):
    """Expert placement infeasible under the given capacities."""


class BrownoutError(SimulationError):
    """Battery state of charge would drop below zero during a step."""

    def __init__(self, message: str, sat_id=None, t: float | None = None):
        super().__init__(message)
        self.sat_id = sat_id
        self.t = t


class NoRouteError(SimulationError):
    """Destination unreachable in the current topology snapshot."""


class ThermalInfeasibleError(SimulationError):
    """No path whose relays and destination can admit the forwarding load."""


class MemoryInfeasibleError(SimulationError):
    """Model does not fit the memory of the satellite that must host it."""


class ComparisonError(SimulationError):
    """Scenario set not comparable (e.g. mismatched workload seeds)."""

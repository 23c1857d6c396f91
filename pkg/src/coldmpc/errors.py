"""Exception hierarchy.

Each family maps onto a CLI exit code (see :data:`EXIT_CODES`).
"""


class ColdMpcError(Exception):
    """Base class for every error raised by coldmpc."""

    exit_code = 1


class InvalidArgumentError(ColdMpcError, ValueError):
    exit_code = 3


class ConfigError(ColdMpcError, ValueError):
    exit_code = 3


class RouteError(ColdMpcError, ValueError):
    exit_code = 4


class DegenerateSegmentError(RouteError):
    """Two consecutive waypoints share a coordinate (zero horizontal run)."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"degenerate segment between waypoints {index} and {index + 1}")


class PropertyRangeError(ColdMpcError, ValueError):
    """A refrigerant property was requested outside the fitted range."""

    exit_code = 5

    def __init__(self, quantity, value, lower, upper):
        self.quantity = quantity
        self.value = value
        self.bounds = (lower, upper)
        if value < lower:
            side = f"below lower bound {lower:g}"
        else:
            side = f"above upper bound {upper:g}"
        super().__init__(f"{quantity}={value:g} {side}")


class InvalidCycleError(ColdMpcError, ValueError):
    exit_code = 5


class CycleCouplingError(ColdMpcError, RuntimeError):
    """Condenser/supply-air fixed point did not converge."""

    exit_code = 5

    def __init__(self, message, last_iterate):
        self.last_iterate = last_iterate
        super().__init__(f"{message} (last iterate t_air_in={last_iterate:.4f} K)")


class PowerLimitError(ColdMpcError, ValueError):
    """Requested cell power exceeds what the cell can deliver."""

    exit_code = 6

    def __init__(self, p_cell, p_max):
        self.p_cell = p_cell
        self.p_max = p_max
        super().__init__(f"cell power {p_cell:.4g} W exceeds deliverable maximum {p_max:.4g} W")


class EmptyBatteryError(ColdMpcError, RuntimeError):
    exit_code = 6


class SolverError(ColdMpcError, RuntimeError):
    exit_code = 7


class OutputError(ColdMpcError, OSError):
    exit_code = 8


EXIT_CODES = {
    "ok": 0,
    "generic": ColdMpcError.exit_code,
    "usage": 2,
    "config": ConfigError.exit_code,
    "route": RouteError.exit_code,
    "refrigerant": PropertyRangeError.exit_code,
    "battery": PowerLimitError.exit_code,
    "solver": SolverError.exit_code,
    "io": OutputError.exit_code,
}

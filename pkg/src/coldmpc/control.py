"""Lower-level controllers: propulsion feedforward, heater P and HVAC P."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class LowLevelGains:
    k_b: float = 0.5  # A/K
    k_h: float = 300.0  # RPM/K
    i_heater_max: float = 5.0  # A
    omega_max: float = 6000.0  # RPM

    def __post_init__(self):
        for name in ("k_b", "k_h", "i_heater_max", "omega_max"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"control.{name} must be positive")


def propulsion_feedforward(f_cmd: float, f_min: float = -4000.0, f_max: float = 6000.0) -> float:
    return min(max(f_cmd, f_min), f_max)


def heater_control(gains: LowLevelGains, t_batt_set: float, t_batt: float) -> float:
    """Heater current [A]; the heater cannot cool."""
    return min(max(gains.k_b * (t_batt_set - t_batt), 0.0), gains.i_heater_max)


def hvac_control(gains: LowLevelGains, t_cabin_req: float, t_cabin: float) -> float:
    """Compressor speed [RPM]; heating only."""
    return min(max(gains.k_h * (t_cabin_req - t_cabin), 0.0), gains.omega_max)

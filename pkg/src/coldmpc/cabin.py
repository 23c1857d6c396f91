"""Single-zone cabin air energy balance."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class CabinParams:
    m_cabin_air: float = 3.0  # kg, 2.5 m^3 at 1.2 kg/m^3
    c_p_air: float = 1005.0  # J/(kg K)
    a_loss: float = 7.0  # m^2
    h_loss: float = 3.5  # W/(m^2 K)
    mdot_air_in: float = 0.10  # kg/s

    def __post_init__(self):
        for name in ("m_cabin_air", "c_p_air", "a_loss", "h_loss", "mdot_air_in"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"cabin.{name} must be positive")

    @property
    def ua(self) -> float:
        """Shell conductance ``h * A`` [W/K]."""
        return self.h_loss * self.a_loss

    @property
    def heat_capacity(self) -> float:
        """Air heat capacity ``m * c_p`` [J/K]."""
        return self.m_cabin_air * self.c_p_air

    @property
    def air_flow_capacity(self) -> float:
        """Supply-air capacity rate ``mdot * c_p`` [W/K]."""
        return self.mdot_air_in * self.c_p_air


@dataclass(frozen=True)
class CabinState:
    t_cabin: float  # K


def q_loss(params: CabinParams, t_cabin, t_ambient):
    """Heat lost through the shell [W]; negative when the cabin is colder than outside."""
    return params.ua * (t_cabin - t_ambient)


def step(params: CabinParams, state: CabinState, t_air_in: float, t_ambient: float, dt: float) -> CabinState:
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    t = state.t_cabin
    dq = -q_loss(params, t, t_ambient) + params.air_flow_capacity * (t_air_in - t)
    return CabinState(t + dt * dq / params.heat_capacity)


def steady_supply_temperature(params: CabinParams, t_cabin: float, t_ambient: float) -> float:
    """Supply-air temperature that holds ``t_cabin`` constant."""
    return t_cabin + q_loss(params, t_cabin, t_ambient) / params.air_flow_capacity

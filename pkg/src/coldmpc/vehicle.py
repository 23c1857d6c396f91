"""Longitudinal vehicle dynamics and propulsion power."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class VehicleParams:
    m_vehicle: float = 1800.0  # kg
    mu: float = 0.01
    rho_air: float = 1.2  # kg/m^3
    a_frontal: float = 2.2  # m^2
    c_d: float = 0.23
    g: float = 9.81  # m/s^2
    eta_regen: float = 0.65

    def __post_init__(self):
        for name in ("m_vehicle", "mu", "rho_air", "a_frontal", "c_d", "g", "eta_regen"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"vehicle.{name} must be positive")
        for name in ("mu", "c_d", "eta_regen"):
            if getattr(self, name) > 1:
                raise InvalidArgumentError(f"vehicle.{name} must lie in (0, 1]")

    @property
    def drag_coeff(self) -> float:
        """``0.5 * rho * A * Cd`` [kg/m]."""
        return 0.5 * self.rho_air * self.a_frontal * self.c_d


@dataclass(frozen=True)
class VehicleState:
    v: float  # m/s
    x_dist: float = 0.0  # m


def resistive_force(params: VehicleParams, v, theta):
    """Rolling friction + grade + aerodynamic drag [N].

    Negative on downhills steep enough for gravity to beat friction and drag.
    Accepts scalars or arrays.
    """
    return ((params.mu * np.cos(theta) + np.sin(theta)) * params.g * params.m_vehicle
            + params.drag_coeff * np.square(v))


def step(params: VehicleParams, state: VehicleState, f_propulsion: float, theta: float, dt: float) -> VehicleState:
    """Explicit Euler step; speed is clamped at zero."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    accel = (f_propulsion - resistive_force(params, state.v, theta)) / params.m_vehicle
    v_next = max(float(state.v + dt * accel), 0.0)
    return VehicleState(v=v_next, x_dist=state.x_dist + state.v * dt)


def propulsion_power(f_propulsion: float, v: float, params: VehicleParams) -> float:
    """Battery-side propulsion power [W]; braking is credited at ``eta_regen``."""
    p = f_propulsion * v
    return p if p >= 0 else params.eta_regen * p

"""Equivalent-circuit cell, lumped cell thermal model and pack aggregation.

The electrical model is one series resistance plus one RC branch. The
thermal model treats the pack as one representative cell heated by ohmic
losses and a resistive heater and cooled by convection to ambient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, PowerLimitError


class OcvCurve:
    """Open-circuit voltage as a function of state of charge.

    The default is the straight line ``3.0 + 1.2 * soc``; a table of
    ``(soc, volts)`` points gives a piecewise-linear curve instead.
    """

    def __init__(self, soc=None, volts=None, *, offset=3.0, slope=1.2):
        if soc is None:
            self.soc = None
            self.offset, self.slope = offset, slope
            return
        self.soc = np.asarray(soc, dtype=float)
        self.volts = np.asarray(volts, dtype=float)
        if self.soc.shape != self.volts.shape or self.soc.size < 2:
            raise InvalidArgumentError("OCV table needs at least two (soc, volts) pairs")
        if np.any(np.diff(self.soc) <= 0):
            raise InvalidArgumentError("OCV table soc values must be strictly increasing")
        if np.any(np.diff(self.volts) < 0):
            raise InvalidArgumentError("OCV curve must be non-decreasing")

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        data = np.array([[float(c) for c in r[:2]] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1])

    def __call__(self, soc):
        if self.soc is None:
            return self.offset + self.slope * soc
        return np.interp(soc, self.soc, self.volts)

    def slope_at(self, soc):
        """dOCV/dSoC (one-sided at table knots)."""
        if self.soc is None:
            return self.slope
        k = int(np.clip(np.searchsorted(self.soc, soc, side="right") - 1, 0, self.soc.size - 2))
        return (self.volts[k + 1] - self.volts[k]) / (self.soc[k + 1] - self.soc[k])

    def __eq__(self, other):
        if not isinstance(other, OcvCurve):
            return NotImplemented
        if self.soc is None or other.soc is None:
            return self.soc is other.soc and (self.offset, self.slope) == (other.offset, other.slope)
        return np.array_equal(self.soc, other.soc) and np.array_equal(self.volts, other.volts)

    def __hash__(self):
        return hash((self.offset, self.slope)) if self.soc is None else hash(self.volts.tobytes())


@dataclass(frozen=True)
class CellParams:
    q: float = 1.4322e4  # A s
    r0: float = 1.3513e-2  # ohm
    r1: float = 1.028e-2  # ohm
    c1: float = 5.2584e3  # F
    ocv_curve: OcvCurve = OcvCurve()

    def __post_init__(self):
        for name in ("q", "r0", "r1", "c1"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"battery.{name} must be positive")

    @property
    def tau(self) -> float:
        return self.r1 * self.c1


@dataclass(frozen=True)
class ThermalParams:
    m_batt: float = 70e-3  # kg
    c_p_batt: float = 950.0  # J/(kg K)
    h_batt: float = 10.0  # W/(m^2 K)
    a_batt: float = 5.3e-3  # m^2
    r_heater: float = 4.0  # ohm

    def __post_init__(self):
        for name in ("m_batt", "c_p_batt", "h_batt", "a_batt", "r_heater"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"thermal.{name} must be positive")

    @property
    def heat_capacity(self) -> float:
        return self.m_batt * self.c_p_batt

    @property
    def ua(self) -> float:
        return self.h_batt * self.a_batt


@dataclass(frozen=True)
class PackParams:
    n_series: int = 100
    n_parallel: int = 56
    heater_scale: float = 1.0

    def __post_init__(self):
        if self.n_series < 1 or self.n_parallel < 1:
            raise InvalidArgumentError("pack needs at least one cell in series and in parallel")
        if self.heater_scale < 0:
            raise InvalidArgumentError("heater_scale must be non-negative")

    @property
    def n_cells(self) -> int:
        return self.n_series * self.n_parallel


@dataclass(frozen=True)
class BatteryState:
    soc: float
    v_c: float = 0.0
    t_batt: float = 293.0
    saturated: bool = False


def terminal_voltage(cell: CellParams, state: BatteryState, i_cell: float) -> float:
    return cell.ocv_curve(state.soc) - state.v_c - i_cell * cell.r0


def electrical_step(cell: CellParams, state: BatteryState, i_cell: float, dt: float) -> BatteryState:
    """Euler step of SoC and RC voltage; SoC is clamped to [0, 1]."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    soc = state.soc - dt * i_cell / cell.q
    v_c = state.v_c + dt * (-state.v_c / cell.tau + i_cell / cell.c1)
    clamped = min(max(soc, 0.0), 1.0)
    return replace(state, soc=clamped, v_c=v_c, saturated=clamped != soc)


def thermal_step(thermal: ThermalParams, state: BatteryState, q_gen: float, p_heater: float, t_ambient: float,
                 dt: float) -> BatteryState:
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    if q_gen < 0 or p_heater < 0:
        raise InvalidArgumentError("heat inputs must be non-negative")
    dq = q_gen + p_heater - thermal.ua * (state.t_batt - t_ambient)
    return replace(state, t_batt=state.t_batt + dt * dq / thermal.heat_capacity)


def ohmic_heat(cell: CellParams, state: BatteryState, i_cell: float) -> float:
    """Heat dissipated in R0 and R1 [W]."""
    return i_cell * i_cell * cell.r0 + state.v_c * state.v_c / cell.r1


def max_cell_power(cell: CellParams, state: BatteryState) -> float:
    e = cell.ocv_curve(state.soc) - state.v_c
    return e * e / (4 * cell.r0)


def cell_current_from_power(cell: CellParams, state: BatteryState, p_cell: float) -> float:
    """Cell current [A] that delivers ``p_cell`` at the terminals.

    Solves ``p = I (OCV - v_c) - I^2 R0`` for the physical root. Charging
    power (negative) gives a negative current.
    """
    e = cell.ocv_curve(state.soc) - state.v_c
    disc = e * e - 4 * cell.r0 * p_cell
    if disc < 0:
        raise PowerLimitError(p_cell, e * e / (4 * cell.r0))
    # rationalised form of (e - sqrt(disc)) / (2 r0); exact at p = 0
    return 2 * p_cell / (e + math.sqrt(disc))


def pack_aggregate(pack: PackParams, p_propulsion: float, p_hvac: float, p_heater_unit: float):
    """Split the pack electrical load onto one cell.

    Returns
    -------
    p_cell : float
        Electrical power drawn from each cell [W].
    p_heater_for_thermal : float
        Heater power seen by the representative-cell thermal model [W].
    """
    load = p_propulsion + p_hvac + pack.heater_scale * p_heater_unit
    return load / pack.n_cells, p_heater_unit

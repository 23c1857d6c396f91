"""System-level receding-horizon controller.

Every ``dt_mpc`` seconds the controller chooses, over ``n_horizon`` steps,
the propulsion force, the cabin setpoint and the battery setpoint that
minimise the weighted battery energy spent on HVAC, propulsion and the
battery heater. Only the first decision is handed to the lower-level
controllers.

Transcription
-------------
Single shooting over the three prediction states ``(soc, t_batt, v)``.
Because the heater follows ``I = clip(K_b (T_set - T), 0, I_max)``, the
battery setpoint is optimised through the heater current it implies, with
the setpoint box turned into the linear coupling
``K_b (T_set_min - T) <= I <= K_b (T_set_max - T)``. The setpoint is
recovered as ``T + I / K_b`` afterwards.

Solver
------
Trust-region sequential quadratic programming on an exact L1 penalty
merit. Each iteration linearises the rollout around the current iterate
(forward sensitivities), builds a convex QP with an epigraph variable for
the regeneration kink and slack variables for every soft constraint, and
solves it with Clarabel. Steps are accepted on actual-versus-predicted
merit reduction, so the returned cost never exceeds the cost of the
repaired warm start.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import clarabel
import numpy as np
from scipy import sparse

from . import refrigerant as rf
from .battery import CellParams, PackParams, PowerLimitError, ThermalParams
from .cabin import CabinParams
from .control import LowLevelGains, heater_control
from .errors import InvalidArgumentError, PropertyRangeError, SolverError
from .vehicle import VehicleParams

log = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter_feasible"
STATUS_RELAXED = "infeasible_relaxed"


@dataclass(frozen=True)
class MpcBounds:
    soc_min: float = 0.05
    soc_max: float = 1.0
    t_batt_min: float = 258.15
    t_batt_max: float = 318.15
    v_min: float = 24.587  # 55 MPH
    v_max: float = 33.528  # 75 MPH
    f_min: float = -4000.0
    f_max: float = 6000.0
    t_cabin_set_min: float = 288.15
    t_cabin_set_max: float = 301.15
    t_batt_set_min: float = 283.15
    t_batt_set_max: float = 315.15

    def __post_init__(self):
        for lo, hi in (("soc_min", "soc_max"), ("t_batt_min", "t_batt_max"), ("v_min", "v_max"),
                       ("f_min", "f_max"), ("t_cabin_set_min", "t_cabin_set_max"),
                       ("t_batt_set_min", "t_batt_set_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise InvalidArgumentError(f"mpc bound {lo} must be below {hi}")


@dataclass(frozen=True)
class MpcConfig:
    n_horizon: int = 20
    dt_mpc: float = 1.0
    w1: float = 1.0  # HVAC
    w2: float = 1.0  # propulsion
    w3: float = 1.0  # heater
    norm_hvac: float = 4e3  # W
    norm_propulsion: float = 1e5  # W
    norm_heater: float = 40.0  # W
    bounds: MpcBounds = MpcBounds()
    distance_target: float | None = None  # m
    t_final: float | None = None  # s
    t_batt_window: tuple = (313.15, 315.15)
    window_ramp: float = 120.0  # s before t_final from which the window is enforced
    window_margin: float = 0.2  # K tightening of the window inside the controller
    enforce_thermal_bounds: bool = True
    slack_weight: float = 1e3  # times max(w1, w2, w3)
    max_iterations: int = 30
    constraint_tolerance: float = 1e-6
    step_tolerance: float = 1e-7
    cost_tolerance: float = 1e-6  # relative predicted merit reduction counted as converged
    # optional per-solve time cap [s]; off by default because a wall-clock cut makes runs machine dependent
    wall_clock_budget: float | None = None
    initial_trust_radius: float = 4.0
    preview_speed: float | None = None  # m/s; None uses the current speed

    def __post_init__(self):
        if self.n_horizon < 1:
            raise InvalidArgumentError("n_horizon must be >= 1")
        if not self.dt_mpc > 0:
            raise InvalidArgumentError("dt_mpc must be positive")
        if min(self.w1, self.w2, self.w3) < 0:
            raise InvalidArgumentError("cost weights must be non-negative")
        if not self.constraint_tolerance > 0:
            raise InvalidArgumentError("constraint_tolerance must be positive")
        lo, hi = self.t_batt_window
        if not lo < hi:
            raise InvalidArgumentError("t_batt_window must be (low, high) with low < high")

    @property
    def penalty(self) -> float:
        return self.slack_weight * max(self.w1, self.w2, self.w3, 1e-12)


@dataclass(frozen=True)
class MpcDecision:
    f_propulsion: float
    t_cabin_set: float
    t_batt_set: float


@dataclass(frozen=True)
class MpcState:
    soc: float
    t_batt: float
    v: float


@dataclass
class HorizonSolution:
    decisions: list
    predicted_states: np.ndarray  # (N+1, 3): soc, t_batt, v
    cost: float
    iterations: int
    status: str
    warm_start_cost: float = math.nan
    max_violation: float = 0.0  # scaled soft-constraint violation of the returned point
    residual: float = 0.0  # hard-constraint residual of the returned point
    energy_cost: float = math.nan
    inputs: np.ndarray = field(default=None, repr=False)  # (3, N): force, cabin set, heater current


# -- HVAC surrogate -------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateGrid:
    t_cabin_set: tuple = (288.15, 301.15, 6)
    t_cabin: tuple = (272.15, 296.15, 7)
    t_ambient: tuple = (250.15, 282.15, 7)
    catchup_time: float = 120.0  # s; cabin heat-up allowance folded into the demand

    def axes(self):
        return [np.linspace(lo, hi, int(n)) for lo, hi, n in (self.t_cabin_set, self.t_cabin, self.t_ambient)]


@dataclass(frozen=True)
class HvacSurrogate:
    """Quadratic fit of battery-side HVAC power in (cabin set, cabin, ambient).

    Evaluations are clipped at zero.
    """

    coefficients: tuple
    center: tuple
    half_width: tuple
    fit_domain: tuple  # ((lo, hi),) * 3
    rms_error: float = math.nan  # normalised RMS error on the fit grid

    def _z(self, t_set, t_cab, t_amb):
        c, h = self.center, self.half_width
        return (t_set - c[0]) / h[0], (t_cab - c[1]) / h[1], (t_amb - c[2]) / h[2]

    def raw(self, t_set, t_cab, t_amb):
        z1, z2, z3 = self._z(t_set, t_cab, t_amb)
        a = self.coefficients
        return (a[0] + a[1] * z1 + a[2] * z2 + a[3] * z3 + a[4] * z1 * z1 + a[5] * z2 * z2 + a[6] * z3 * z3
                + a[7] * z1 * z2 + a[8] * z1 * z3 + a[9] * z2 * z3)

    def __call__(self, t_set, t_cab, t_amb):
        return np.maximum(self.raw(t_set, t_cab, t_amb), 0.0)

    def value_and_grad(self, t_set, t_cab, t_amb):
        """Power and its derivatives with respect to ``t_set`` and ``t_cab``."""
        z1, z2, z3 = self._z(t_set, t_cab, t_amb)
        a = self.coefficients
        val = self.raw(t_set, t_cab, t_amb)
        if val <= 0:
            return 0.0, 0.0, 0.0
        d1 = (a[1] + 2 * a[4] * z1 + a[7] * z2 + a[8] * z3) / self.half_width[0]
        d2 = (a[2] + 2 * a[5] * z2 + a[7] * z1 + a[9] * z3) / self.half_width[1]
        return float(val), float(d1), float(d2)


def _features(z1, z2, z3):
    return np.column_stack([np.ones_like(z1), z1, z2, z3, z1 * z1, z2 * z2, z3 * z3, z1 * z2, z1 * z3, z2 * z3])


def hvac_heat_demand(cabin: CabinParams, t_cabin_set, t_cabin, t_ambient, catchup_time):
    """Condenser heat [W] that holds ``t_cabin_set`` and closes the gap from ``t_cabin``."""
    q = cabin.ua * (t_cabin_set - t_ambient) + cabin.heat_capacity * (t_cabin_set - t_cabin) / catchup_time
    return max(q, 0.0)


def steady_hvac_power(fit, comp, cabin, cycle, t_cabin_set, t_cabin, t_ambient, catchup_time=120.0):
    """Battery-side compressor power delivering :func:`hvac_heat_demand`.

    The supply-air temperature follows directly from the heat demand, which
    fixes the condensing state; mass flow and compressor work follow. Demand
    above the high-pressure cutoff is capped there.
    """
    q = hvac_heat_demand(cabin, t_cabin_set, t_cabin, t_ambient, catchup_time)
    if q <= 0:
        return 0.0
    t_air = min(t_cabin + q / cabin.air_flow_capacity, cycle.condensing_limit - cycle.condenser_offset)
    q = (t_air - t_cabin) * cabin.air_flow_capacity
    if q <= 0:
        return 0.0
    s1 = rf.state1_from_ambient(fit, t_ambient, cycle.evaporator_offset)
    s3 = rf.state3_from_supply_air(fit, t_air, cycle.condenser_offset)
    s2 = rf.state2_isentropic(fit, s1, s3)
    mdot = q / ((s2.h - s3.h) * 1000.0)
    return rf.compressor_power(comp, mdot, s1.h, s2.h)[1]


def fit_hvac_surrogate(fit, comp: rf.CompressorParams, cabin: CabinParams, cycle: rf.CycleParams = rf.CycleParams(),
                       grid: SurrogateGrid = SurrogateGrid()) -> HvacSurrogate:
    axes = grid.axes()
    lo_amb = axes[2].min() - cycle.evaporator_offset
    hi_cond = max(axes[0].max(), axes[1].max()) + cycle.condenser_offset
    if lo_amb < fit.t_min:
        raise PropertyRangeError("t_ambient - evaporator_offset", lo_amb, fit.t_min, fit.t_max)
    if hi_cond > fit.t_max:
        raise PropertyRangeError("t_cabin + condenser_offset", hi_cond, fit.t_min, fit.t_max)
    g1, g2, g3 = (a.ravel() for a in np.meshgrid(*axes, indexing="ij"))
    target = np.array([steady_hvac_power(fit, comp, cabin, cycle, a, b, c, grid.catchup_time)
                       for a, b, c in zip(g1, g2, g3)])
    center = tuple(float(0.5 * (a.min() + a.max())) for a in axes)
    half = tuple(float(max(0.5 * (a.max() - a.min()), 1e-9)) for a in axes)
    z = [(g - c) / h for g, c, h in zip((g1, g2, g3), center, half)]
    coef, *_ = np.linalg.lstsq(_features(*z), target, rcond=None)
    sur = HvacSurrogate(tuple(coef.tolist()), center, half, tuple((float(a.min()), float(a.max())) for a in axes))
    err = sur(g1, g2, g3) - target
    rms = float(np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(target**2)))
    return replace(sur, rms_error=rms)


@lru_cache(maxsize=8)
def cached_surrogate(fit, comp, cabin, cycle, grid) -> HvacSurrogate:
    return fit_hvac_surrogate(fit, comp, cabin, cycle, grid)


# -- prediction model --------------------------------------------------------------

@dataclass(frozen=True)
class PredictionModel:
    """Physical parameters the controller predicts with."""

    vehicle: VehicleParams
    cell: CellParams
    thermal: ThermalParams
    pack: PackParams
    gains: LowLevelGains
    hvac: Callable  # object with value_and_grad(t_set, t_cab, t_amb)


@dataclass
class Preview:
    """Environment over the horizon, one entry per MPC step."""

    theta: np.ndarray
    t_ambient: np.ndarray


class _Horizon:
    """Everything fixed during one solve."""

    def __init__(self, model, config, x0, preview, t_cabin, v_c, t_now, x_dist):
        n = config.n_horizon
        self.model, self.config, self.n = model, config, n
        self.dt = config.dt_mpc
        self.x0 = np.asarray(x0, dtype=float)
        self.theta = np.asarray(preview.theta, dtype=float)[:n]
        self.t_amb = np.asarray(preview.t_ambient, dtype=float)[:n]
        if self.theta.size < n or self.t_amb.size < n:
            raise InvalidArgumentError(f"preview must cover {n} steps")
        self.t_cabin = t_cabin
        self.v_c = v_c
        self.t_now = t_now
        veh = model.vehicle
        self.grade_force = (veh.mu * np.cos(self.theta) + np.sin(self.theta)) * veh.g * veh.m_vehicle
        self.progress = self._progress(config, t_now, x_dist)
        self.window_steps = self._window_steps(config, t_now)

    def _progress(self, config, t_now, x_dist):
        if config.distance_target is None or config.t_final is None:
            return None
        remaining = config.distance_target - x_dist
        t_rem = config.t_final - t_now
        if remaining <= 0 or t_rem <= 0:
            return None
        k = min(self.n, max(1, math.ceil(t_rem / self.dt - 1e-9)))
        return k, remaining * min(1.0, k * self.dt / t_rem)

    def _window_steps(self, config, t_now):
        if config.t_final is None:
            return np.zeros(0, dtype=int)
        start = config.t_final - config.window_ramp
        k = np.arange(1, self.n + 1)
        return k[t_now + k * self.dt >= start - 1e-9]


def _ocv(cell, soc):
    return cell.ocv_curve(soc), cell.ocv_curve.slope_at(soc)


def _rollout(h: _Horizon, u: np.ndarray, jac: bool = False):
    """Simulate the prediction model for input matrix ``u`` = (force, cabin set, heater current).

    Returns states (N+1, 3), per-step powers dict and, when ``jac`` is set,
    sensitivities ``dX`` of shape (N+1, 3, 3N) and power gradients.
    """
    m = h.model
    veh, cell, th, pack = m.vehicle, m.cell, m.thermal, m.pack
    n, dt = h.n, h.dt
    nu = 3 * n
    X = np.empty((n + 1, 3))
    X[0] = h.x0
    p_prop = np.empty(n)
    p_hvac = np.empty(n)
    p_heat = np.empty(n)
    fv = np.empty(n)
    sign = np.empty(n)
    if jac:
        dX = np.zeros((n + 1, 3, nu))
        dfv = np.zeros((n, nu))
        dhvac = np.zeros((n, nu))
    ncell = pack.n_cells
    vc = h.v_c
    q_rc = vc * vc / cell.r1
    for k in range(n):
        soc, tb, v = X[k]
        f, tc, i = u[0, k], u[1, k], u[2, k]
        t_cab = h.t_cabin if k == 0 else u[1, k - 1]
        fv[k] = f * v
        s = 1.0 if fv[k] >= 0 else veh.eta_regen
        sign[k] = s
        p_prop[k] = s * fv[k]
        ph, dph_set, dph_cab = m.hvac.value_and_grad(tc, t_cab, h.t_amb[k])
        p_hvac[k] = ph
        p_heat[k] = th.r_heater * i * i
        p_cell = (p_prop[k] + ph + pack.heater_scale * p_heat[k]) / ncell
        ocv, docv = _ocv(cell, soc)
        e = ocv - vc
        disc = e * e - 4 * cell.r0 * p_cell
        if disc <= 0:
            raise PowerLimitError(p_cell, e * e / (4 * cell.r0))
        root = math.sqrt(disc)
        cur = 2 * p_cell / (e + root)
        v_next = v + dt / veh.m_vehicle * (f - h.grade_force[k] - veh.drag_coeff * v * v)
        soc_next = soc - dt * cur / cell.q
        q_gen = cur * cur * cell.r0 + q_rc
        tb_next = tb + dt / th.heat_capacity * (q_gen + p_heat[k] - th.ua * (tb - h.t_amb[k]))
        X[k + 1] = soc_next, tb_next, v_next
        if jac:
            dsoc, dtb, dv = dX[k]
            g_fv = f * dv
            g_fv[k] += v
            dfv[k] = g_fv
            g_h = dhvac[k]
            g_h[n + k] = dph_set
            if k > 0:
                g_h[n + k - 1] += dph_cab
            g_p = (s * g_fv + g_h) / ncell
            g_p[2 * n + k] += pack.heater_scale * 2 * th.r_heater * i / ncell
            g_i = g_p / root - (cur / root) * docv * dsoc
            dX[k + 1, 0] = dsoc - dt / cell.q * g_i
            g_tb = (1 - dt * th.ua / th.heat_capacity) * dtb + dt / th.heat_capacity * (2 * cur * cell.r0) * g_i
            g_tb[2 * n + k] += dt / th.heat_capacity * 2 * th.r_heater * i
            dX[k + 1, 1] = g_tb
            g_v = (1 - dt / veh.m_vehicle * 2 * veh.drag_coeff * v) * dv
            g_v[k] += dt / veh.m_vehicle
            dX[k + 1, 2] = g_v
    out = {"p_prop": p_prop, "p_hvac": p_hvac, "p_heat": p_heat, "fv": fv, "sign": sign}
    if jac:
        out.update(dX=dX, dfv=dfv, dhvac=dhvac)
    return X, out


def _constraints(h: _Horizon, u, X, jac_data=None):
    """Soft constraints ``g(u) <= 0`` scaled to natural units, with optional Jacobian."""
    cfg, b, gains = h.config, h.config.bounds, h.model.gains
    n, dt = h.n, h.dt
    rows, grads = [], []

    def add(values, grad=None):
        rows.append(np.atleast_1d(values))
        if jac_data is not None:
            grads.append(np.atleast_2d(grad))

    dX = None if jac_data is None else jac_data["dX"]
    ks = slice(1, n + 1)
    units = []

    def bound_pair(col, lo, hi, unit):
        add((lo - X[ks, col]) / unit, None if dX is None else -dX[ks, col] / unit)
        add((X[ks, col] - hi) / unit, None if dX is None else dX[ks, col] / unit)
        units.extend([unit] * 2 * n)

    bound_pair(0, b.soc_min, b.soc_max, 0.01)
    if cfg.enforce_thermal_bounds:
        bound_pair(1, b.t_batt_min, b.t_batt_max, 1.0)
    bound_pair(2, b.v_min, b.v_max, 1.0)

    # heater current must correspond to a setpoint inside its box
    tb = X[:n, 1]
    cur = u[2]
    lo_i = gains.k_b * (b.t_batt_set_min - tb)
    hi_i = gains.k_b * (b.t_batt_set_max - tb)
    if dX is not None:
        eye_i = np.zeros((n, 3 * n))
        eye_i[np.arange(n), 2 * n + np.arange(n)] = 1.0
        d_tb = dX[:n, 1]
    add(lo_i - cur, None if dX is None else -gains.k_b * d_tb - eye_i)
    add(cur - hi_i, None if dX is None else gains.k_b * d_tb + eye_i)
    units.extend([1.0] * 2 * n)

    if h.window_steps.size:
        lo, hi = cfg.t_batt_window
        lo, hi = lo + cfg.window_margin, hi - cfg.window_margin
        w = h.window_steps
        add(lo - X[w, 1], None if dX is None else -dX[w, 1])
        add(X[w, 1] - hi, None if dX is None else dX[w, 1])
        units.extend([1.0] * 2 * w.size)

    if h.progress is not None:
        k, req = h.progress
        v = X[: k + 1, 2]
        dist = dt * (0.5 * v[0] + v[1:k].sum() + 0.5 * v[k])
        grad = None
        if dX is not None:
            dv = dX[: k + 1, 2]
            grad = -dt * (0.5 * dv[0] + dv[1:k].sum(axis=0) + 0.5 * dv[k])
        add(req - dist, grad)
        units.append(1.0)

    g = np.concatenate(rows)
    G = np.vstack(grads) if jac_data is not None else None
    return g, G


def _energy_cost(h, out):
    cfg = h.config
    return h.dt * float(cfg.w1 / cfg.norm_hvac * out["p_hvac"].sum()
                        + cfg.w2 / cfg.norm_propulsion * out["p_prop"].sum()
                        + cfg.w3 / cfg.norm_heater * out["p_heat"].sum())


def _input_bounds(h):
    b, gains, n = h.config.bounds, h.model.gains, h.n
    lo = np.concatenate([np.full(n, b.f_min), np.full(n, b.t_cabin_set_min), np.zeros(n)])
    hi = np.concatenate([np.full(n, b.f_max), np.full(n, b.t_cabin_set_max), np.full(n, gains.i_heater_max)])
    return lo, hi


def _scales(h):
    n = h.n
    return np.concatenate([np.full(n, 500.0), np.full(n, 1.0), np.full(n, 0.5)])


@dataclass
class _Point:
    u: np.ndarray  # (3, N)
    X: np.ndarray
    out: dict
    g: np.ndarray
    energy: float
    merit: float

    @property
    def violation(self) -> float:
        return float(np.max(self.g, initial=0.0))


def _evaluate(h, u, jac=False):
    X, out = _rollout(h, u, jac)
    g, G = _constraints(h, u, X, out if jac else None)
    energy = _energy_cost(h, out)
    merit = energy + h.config.penalty * float(np.maximum(g, 0.0).sum())
    pt = _Point(u, X, out, g, energy, merit)
    return pt, G


def repair_warm_start(h: _Horizon, u0: np.ndarray) -> np.ndarray:
    """Clip a candidate input sequence into the input boxes and the heater coupling."""
    lo, hi = _input_bounds(h)
    u = np.clip(np.asarray(u0, dtype=float).reshape(3, h.n), lo.reshape(3, h.n), hi.reshape(3, h.n))
    # the heater coupling depends on the predicted battery temperature, so
    # repair it step by step along a rollout
    b, gains = h.config.bounds, h.model.gains
    for k in range(h.n):
        X, _ = _rollout_prefix(h, u, k)
        tb = X[k, 1]
        lo_i = max(0.0, gains.k_b * (b.t_batt_set_min - tb))
        hi_i = min(gains.i_heater_max, gains.k_b * (b.t_batt_set_max - tb))
        u[2, k] = min(max(u[2, k], lo_i), max(hi_i, lo_i), gains.i_heater_max)
    return u


def _rollout_prefix(h, u, k):
    # states up to index k only depend on inputs before k
    if k == 0:
        return h.x0[None, :], None
    sub = _Horizon.__new__(_Horizon)
    sub.__dict__.update(h.__dict__)
    sub.n = k
    return _rollout(sub, u[:, :k])


def default_warm_start(h: _Horizon) -> np.ndarray:
    b = h.config.bounds
    v = h.x0[2]
    hold = h.grade_force + h.model.vehicle.drag_coeff * v * v
    return np.vstack([hold, np.full(h.n, b.t_cabin_set_min), np.zeros(h.n)])


def _solve_qp(h, pt: _Point, G, radius):
    """Build and solve the convex subproblem around ``pt``.

    The QP is posed in scaled variables: the input step divided by
    :func:`_scales`, the propulsion epigraph divided by its cost norm, and
    one non-negative slack per soft constraint.
    """
    cfg, n = h.config, h.n
    nu = 3 * n
    out = pt.out
    sc = _scales(h)
    # drop soft constraints that stay satisfied everywhere in the trust region;
    # their rows cannot be active in the subproblem
    keep = pt.g + radius * (np.abs(G) @ sc) > 0
    G = G[keep]
    pt = replace(pt, g=pt.g[keep])
    m = G.shape[0]
    nx = nu + n + m
    dt = h.dt
    p_scale = cfg.norm_propulsion
    i_d, i_p, i_s = np.arange(nu), nu + np.arange(n), nu + n + np.arange(m)

    cur = pt.u[2]
    heat_w = dt * cfg.w3 / cfg.norm_heater * h.model.thermal.r_heater
    grad = dt * cfg.w1 / cfg.norm_hvac * out["dhvac"].sum(axis=0)
    grad[2 * n:] += 2 * heat_w * cur
    hess = np.full(nu, 1e-6)
    hess[2 * n:] += 2 * heat_w * sc[2 * n:] ** 2
    q = np.concatenate([grad * sc, np.full(n, dt * cfg.w2 * p_scale / cfg.norm_propulsion),
                        np.full(m, cfg.penalty)])

    eta = h.model.vehicle.eta_regen
    dfv = out["dfv"] * sc / p_scale
    fv = out["fv"] / p_scale
    rows, cols, vals, rhs = [], [], [], []

    def block(r0, dense=None, diag=None):
        if dense is not None:
            rr, cc = np.nonzero(dense[0])
            rows.append(r0 + rr)
            cols.append(dense[1][cc])
            vals.append(dense[0][rr, cc])
        if diag is not None:
            idx, col, val = diag
            rows.append(r0 + idx)
            cols.append(col)
            vals.append(np.broadcast_to(val, idx.shape))

    r = 0
    ar = np.arange(n)
    # epigraph of the regeneration kink: p >= F v and p >= eta F v
    for sgn in (1.0, eta):
        block(r, dense=(sgn * dfv, i_d), diag=(ar, i_p, -1.0))
        rhs.append(-sgn * fv)
        r += n
    # soft constraints g + G d <= slack, then slack >= 0
    am = np.arange(m)
    block(r, dense=(G * sc, i_d), diag=(am, i_s, -1.0))
    rhs.append(-pt.g)
    r += m
    block(r, diag=(am, i_s, -1.0))
    rhs.append(np.zeros(m))
    r += m
    # input boxes intersected with the trust region
    lo, hi = _input_bounds(h)
    u = pt.u.ravel()
    d_lo = np.minimum(np.maximum((lo - u) / sc, -radius), 0.0)
    d_hi = np.maximum(np.minimum((hi - u) / sc, radius), 0.0)
    an = np.arange(nu)
    block(r, diag=(an, i_d, 1.0))
    block(r + nu, diag=(an, i_d, -1.0))
    rhs.extend([d_hi, -d_lo])
    r += 2 * nu

    Amat = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, nx))
    b = np.concatenate(rhs)
    Pmat = sparse.diags(np.concatenate([hess, np.zeros(n + m)]), format="csc")
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver = clarabel.DefaultSolver(Pmat, q, Amat, b, [clarabel.NonnegativeConeT(r)], settings)
    sol = solver.solve()
    status = str(sol.status)
    if not status.endswith("Solved"):
        raise SolverError(f"QP subproblem failed: {status}")
    x = np.asarray(sol.x)
    z = np.clip(x[:nu], d_lo, d_hi)
    model_merit = float(q[nu:] @ x[nu:]) + float(q[:nu] @ z) + 0.5 * float(hess @ z**2)
    # the QP objective drops the constant HVAC and heater terms of the merit
    hvac0 = dt * cfg.w1 / cfg.norm_hvac * float(out["p_hvac"].sum())
    base = pt.merit - float(heat_w * (cur**2).sum()) - hvac0
    return z * sc, base - model_merit, float(np.max(np.abs(z), initial=0.0))


def _decisions(h, u, X):
    gains, b = h.model.gains, h.config.bounds
    out = []
    for k in range(h.n):
        i, tb = u[2, k], X[k, 1]
        if i <= 0:
            t_set = tb
        elif i >= gains.i_heater_max:
            t_set = tb + gains.i_heater_max / gains.k_b
        else:
            t_set = tb + i / gains.k_b
        out.append(MpcDecision(float(u[0, k]), float(u[1, k]),
                               float(min(max(t_set, b.t_batt_set_min), b.t_batt_set_max))))
    return out


def solve_horizon(model: PredictionModel, config: MpcConfig, state: MpcState, preview: Preview, *,
                  t_cabin: float, v_c: float = 0.0, t_now: float = 0.0, x_dist: float = 0.0,
                  warm_start=None) -> HorizonSolution:
    """Solve one horizon problem.

    Parameters
    ----------
    state : MpcState
        Measured ``(soc, t_batt, v)`` at the start of the horizon.
    preview : Preview
        Road angle and ambient temperature for each of the N steps.
    t_cabin, v_c : float
        Measured cabin temperature and RC-branch voltage, held over the horizon.
    t_now, x_dist : float
        Clock and odometer, used by the arrival constraints.
    warm_start : array_like, optional
        (3, N) inputs (force, cabin setpoint, heater current) to start from.
    """
    started = time.perf_counter()
    h = _Horizon(model, config, (state.soc, state.t_batt, state.v), preview, t_cabin, v_c, t_now, x_dist)
    u0 = default_warm_start(h) if warm_start is None else warm_start
    u = repair_warm_start(h, u0)
    pt, G = _evaluate(h, u, jac=True)
    warm_cost = pt.merit
    radius = config.initial_trust_radius
    tol = config.constraint_tolerance
    status = STATUS_MAX_ITER
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        d, predicted, step_norm = _solve_qp(h, pt, G, radius)
        if step_norm < config.step_tolerance or predicted <= config.cost_tolerance * max(1.0, abs(pt.merit)):
            status = STATUS_OPTIMAL
            break
        trial_u = pt.u + d.reshape(3, h.n)
        try:
            trial, trial_G = _evaluate(h, trial_u, jac=True)
            actual = pt.merit - trial.merit
        except PowerLimitError:
            trial, actual = None, -math.inf
        ratio = actual / predicted
        if ratio <= 0.1 and trial is not None:
            # second-order correction: shift the linearised constraints by the
            # curvature error seen at the trial point and re-solve
            shifted = replace(pt, g=trial.g - G @ d)
            d2 = _solve_qp(h, shifted, G, radius)[0]
            try:
                trial2, trial2_G = _evaluate(h, pt.u + d2.reshape(3, h.n), jac=True)
                if (pt.merit - trial2.merit) / predicted > 0.1:
                    trial, trial_G = trial2, trial2_G
                    actual = pt.merit - trial.merit
                    ratio = actual / predicted
            except PowerLimitError:
                pass
        if ratio > 0.1 and actual > 0:
            pt, G = trial, trial_G
            if ratio > 0.75 and step_norm > 0.9 * radius:
                radius = min(2.0 * radius, 1e3)
            elif ratio < 0.25:
                radius = 0.5 * radius
        else:
            radius = 0.25 * step_norm
        if radius < config.step_tolerance:
            status = STATUS_OPTIMAL
            break
        if config.wall_clock_budget is not None and time.perf_counter() - started > config.wall_clock_budget:
            log.warning("MPC wall-clock budget exhausted after %d iterations", iterations)
            break
    if pt.violation > tol:
        status = STATUS_RELAXED
    return HorizonSolution(
        decisions=_decisions(h, pt.u, pt.X),
        predicted_states=pt.X.copy(),
        cost=pt.merit,
        iterations=iterations,
        status=status,
        warm_start_cost=warm_cost,
        max_violation=pt.violation,
        residual=hard_residual(h, pt.u, pt.X),
        energy_cost=pt.energy,
        inputs=pt.u.copy(),
    )


def hard_residual(h, u, X) -> float:
    """Largest violation of input boxes and dynamics (scaled)."""
    lo, hi = _input_bounds(h)
    flat = u.ravel()
    sc = _scales(h)
    box = np.max(np.maximum(np.maximum(lo - flat, flat - hi), 0.0) / sc, initial=0.0)
    X2, _ = _rollout(h, u)
    dyn = np.max(np.abs(X2 - X) / np.array([0.01, 1.0, 1.0]), initial=0.0)
    return float(max(box, dyn))


def predict_dynamics(model: PredictionModel, config: MpcConfig, state: MpcState, decision: MpcDecision,
                     preview: tuple, *, t_cabin: float, v_c: float = 0.0) -> MpcState:
    """Advance ``(soc, t_batt, v)`` by one ``dt_mpc`` under a set of setpoints.

    ``preview`` is ``(theta, t_ambient)`` for the step.
    """
    theta, t_amb = preview
    cfg1 = replace(config, n_horizon=1)
    h = _Horizon(model, cfg1, (state.soc, state.t_batt, state.v), Preview(np.array([theta]), np.array([t_amb])),
                 t_cabin, v_c, 0.0, 0.0)
    i = heater_control(model.gains, decision.t_batt_set, state.t_batt)
    u = np.array([[decision.f_propulsion], [decision.t_cabin_set], [i]])
    X, _ = _rollout(h, u)
    return MpcState(*X[1])


# -- receding-horizon wrapper --------------------------------------------------------

@dataclass
class SolveRecord:
    t: float
    status: str
    iterations: int
    cost: float
    warm_start_cost: float
    max_violation: float
    residual: float
    clamped: bool
    held: bool


class RecedingController:
    """Re-solves every period, warm-started from the shifted previous plan."""

    def __init__(self, model: PredictionModel, config: MpcConfig):
        self.model = model
        self.config = config
        self.previous: HorizonSolution | None = None
        self.applied: MpcDecision | None = None
        self.records: list[SolveRecord] = []

    def shifted_warm_start(self):
        if self.previous is None:
            return None
        u = self.previous.inputs
        return np.concatenate([u[:, 1:], u[:, -1:]], axis=1)

    def clamp(self, d: MpcDecision) -> tuple[MpcDecision, bool]:
        b = self.config.bounds
        c = MpcDecision(min(max(d.f_propulsion, b.f_min), b.f_max),
                        min(max(d.t_cabin_set, b.t_cabin_set_min), b.t_cabin_set_max),
                        min(max(d.t_batt_set, b.t_batt_set_min), b.t_batt_set_max))
        return c, c != d

    def step(self, state: MpcState, preview: Preview, *, t_cabin: float, v_c: float = 0.0, t_now: float = 0.0,
             x_dist: float = 0.0) -> MpcDecision:
        try:
            sol = solve_horizon(self.model, self.config, state, preview, t_cabin=t_cabin, v_c=v_c, t_now=t_now,
                                x_dist=x_dist, warm_start=self.shifted_warm_start())
        except (SolverError, PowerLimitError) as exc:
            log.warning("MPC solve failed at t=%.2f: %s; holding previous decision", t_now, exc)
            held = self.applied or MpcDecision(0.0, self.config.bounds.t_cabin_set_min, state.t_batt)
            self.applied = held
            self.records.append(SolveRecord(t_now, "failed", 0, math.nan, math.nan, math.nan, math.nan, False, True))
            return held
        decision, clamped = self.clamp(sol.decisions[0])
        if clamped:
            log.info("MPC decision clamped into bounds at t=%.2f", t_now)
        self.previous = sol
        self.applied = decision
        self.records.append(SolveRecord(t_now, sol.status, sol.iterations, sol.cost, sol.warm_start_cost,
                                        sol.max_violation, sol.residual, clamped, False))
        return decision

"""Closed-loop simulation: plant at ``dt_sim``, controller every ``dt_mpc``.

Within one plant step the modules update in a fixed order: lower-level
controllers (acting on the measurements taken at the start of the step),
heat-pump cycle, cabin, battery electrical, battery thermal, vehicle.
Each trace row records the state at the start of a step together with the
inputs and powers applied during it.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import battery as bat
from . import cabin as cab
from . import mpc
from . import refrigerant as rf
from . import vehicle as veh
from .config import ScenarioConfig
from .control import heater_control, hvac_control, propulsion_feedforward
from .errors import ColdMpcError, ConfigError, EmptyBatteryError, InvalidArgumentError, OutputError, RouteError
from .route import (DistanceProfile, RouteProfile, generate_sinusoidal, ingest_waypoints, read_route_csv)

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "t", "x_dist", "v", "grade", "t_ambient", "t_cabin", "t_air_in", "t_batt", "soc", "v_c", "v_terminal",
    "i_cell", "f_propulsion", "omega_comp", "i_heater", "p_propulsion", "p_hvac", "p_heater", "p_pack",
    "t_cabin_set", "t_batt_set", "solver_status", "solver_iterations", "solver_cost",
)
STRING_COLUMNS = {"solver_status"}

BATTERY_TARGET = 314.15  # K, centre of the arrival window
SETTLE_BAND = 1.0  # K


# -- environment ---------------------------------------------------------------------

class TimeEnvironment:
    """Grade and ambient indexed by time."""

    def __init__(self, profile: RouteProfile):
        self.profile = profile

    def theta(self, t, x):
        return float(self.profile.theta_at(t))

    def grade(self, t, x):
        return float(self.profile.grade_at(t))

    def ambient(self, t):
        return float(self.profile.ambient_at(t))

    def preview(self, t, x, v, n, dt, preview_speed=None) -> mpc.Preview:
        ts = t + dt * np.arange(n)
        return mpc.Preview(np.asarray(self.profile.theta_at(ts)), np.asarray(self.profile.ambient_at(ts)))


class DistanceEnvironment:
    """Grade indexed by distance travelled, ambient a sinusoid in time.

    The preview maps distance to time with a constant speed: the configured
    preview speed or, by default, the current speed.
    """

    def __init__(self, profile: DistanceProfile, t_mean, t_amp, t_period):
        self.profile = profile
        self.t_mean, self.t_amp, self.t_period = t_mean, t_amp, t_period

    def theta(self, t, x):
        return float(self.profile.theta_at(x))

    def grade(self, t, x):
        return float(self.profile.grade_at(x))

    def ambient(self, t):
        return self.t_mean + self.t_amp * math.sin(2 * math.pi * t / self.t_period)

    def preview(self, t, x, v, n, dt, preview_speed=None) -> mpc.Preview:
        speed = v if preview_speed is None else preview_speed
        k = np.arange(n)
        ts = t + dt * k
        amb = self.t_mean + self.t_amp * np.sin(2 * np.pi * ts / self.t_period)
        return mpc.Preview(np.asarray(self.profile.theta_at(x + speed * dt * k)), amb)


def build_environment(config: ScenarioConfig):
    r = config.route
    duration = max(config.scenario.t_final, r.sample_dt)
    if r.kind == "sinusoid":
        return TimeEnvironment(generate_sinusoidal(r.grade_amplitude, r.grade_period, r.t_ambient_mean,
                                                   r.t_ambient_amplitude, r.t_ambient_period, duration, r.sample_dt))
    if r.kind in ("csv", "waypoints"):
        if not r.file:
            raise ConfigError(f"route.kind = {r.kind} needs route.file")
        data = read_route_csv(config.resolve(r.file))
        if isinstance(data, RouteProfile):
            if r.kind != "csv":
                raise RouteError("route.file holds a time profile but route.kind is 'waypoints'")
            return TimeEnvironment(data)
        if r.kind != "waypoints":
            raise RouteError("route.file holds waypoints but route.kind is 'csv'")
        return DistanceEnvironment(ingest_waypoints(data, r.smoothing_window), r.t_ambient_mean,
                                   r.t_ambient_amplitude, r.t_ambient_period)
    raise ConfigError(f"unknown route.kind {r.kind!r}")


# -- state, trace and summary ----------------------------------------------------------

@dataclass(frozen=True)
class PlantState:
    vehicle: veh.VehicleState
    cabin: cab.CabinState
    battery: bat.BatteryState


class SimTrace:
    """Per-step records in the fixed :data:`TRACE_COLUMNS` order."""

    def __init__(self, rows=None):
        self.rows: list[tuple] = list(rows or [])

    def append(self, row: dict):
        self.rows.append(tuple(row[c] for c in TRACE_COLUMNS))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        if name not in TRACE_COLUMNS:
            raise InvalidArgumentError(f"unknown trace column {name!r}")
        j = TRACE_COLUMNS.index(name)
        values = [r[j] for r in self.rows]
        return values if name in STRING_COLUMNS else np.array(values, dtype=float)


@dataclass
class SimSummary:
    status: str
    duration: float
    final_distance: float
    final_soc: float
    final_t_batt: float
    final_t_cabin: float
    min_soc: float
    cabin_settle_time: float | None
    battery_settle_time: float | None
    energy_propulsion: float
    energy_hvac: float
    energy_heater: float
    energy_pack: float
    peak_p_propulsion: float
    peak_p_hvac: float
    arrival_window_met: bool
    solver: dict = field(default_factory=dict)
    error: str = ""


def settle_time(trace: SimTrace, signal: str, target: float, band: float):
    """First time after which ``signal`` stays within ``target +- band``.

    Returns ``None`` when the signal is outside the band at the end of the run.
    """
    if not band > 0:
        raise InvalidArgumentError("band must be positive")
    values = trace.column(signal)
    if len(values) == 0:
        return None
    t = trace.column("t")
    outside = np.flatnonzero(np.abs(values - target) > band)
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last == len(values) - 1:
        return None
    return float(t[last + 1])


# -- simulation ------------------------------------------------------------------------

@dataclass
class _Plant:
    config: ScenarioConfig
    fit: rf.PropertyFit

    def step(self, state: PlantState, f_cmd, t_cabin_set, t_batt_set, theta, t_amb, dt):
        c = self.config
        b = c.bounds
        v = state.vehicle.v
        t_cabin = state.cabin.t_cabin
        bs = state.battery
        # lower-level controllers on the measurements at the start of the step
        f = propulsion_feedforward(f_cmd, b.f_min, b.f_max)
        i_h = heater_control(c.control, t_batt_set, bs.t_batt)
        omega = hvac_control(c.control, t_cabin_set, t_cabin)
        if omega > 0:
            omega = min(omega, rf.max_compressor_speed(self.fit, c.compressor, c.cabin, t_amb, t_cabin, c.cycle))
        if omega > 0:
            res = rf.solve_cycle(self.fit, c.compressor, c.cabin, omega, t_amb, t_cabin, c.cycle)
            t_air_in, p_hvac = res.t_air_in, res.p_battery
        else:
            t_air_in, p_hvac = t_cabin, 0.0
        cabin_next = cab.step(c.cabin, state.cabin, t_air_in, t_amb, dt)
        p_prop = veh.propulsion_power(f, v, c.vehicle)
        p_heat = i_h * i_h * c.thermal.r_heater
        p_cell, p_heat_cell = bat.pack_aggregate(c.pack, p_prop, p_hvac, p_heat)
        i_cell = bat.cell_current_from_power(c.battery, bs, p_cell)
        v_term = bat.terminal_voltage(c.battery, bs, i_cell)
        q_gen = bat.ohmic_heat(c.battery, bs, i_cell)
        bs_next = bat.electrical_step(c.battery, bs, i_cell, dt)
        bs_next = bat.thermal_step(c.thermal, bs_next, q_gen, p_heat_cell, t_amb, dt)
        vehicle_next = veh.step(c.vehicle, state.vehicle, f, theta, dt)
        row = dict(t_air_in=t_air_in, v_terminal=v_term, i_cell=i_cell, f_propulsion=f, omega_comp=omega,
                   i_heater=i_h, p_propulsion=p_prop, p_hvac=p_hvac, p_heater=p_heat,
                   p_pack=c.pack.n_cells * i_cell * v_term)
        return PlantState(vehicle_next, cabin_next, bs_next), row


def initial_state(config: ScenarioConfig) -> PlantState:
    i = config.initial
    return PlantState(veh.VehicleState(i.v, i.x_dist), cab.CabinState(i.t_cabin),
                      bat.BatteryState(i.soc, i.v_c, i.t_batt))


def prediction_model(config: ScenarioConfig, fit=None) -> mpc.PredictionModel:
    fit = rf.default_fit() if fit is None else fit
    surrogate = mpc.cached_surrogate(fit, config.compressor, config.cabin, config.cycle, config.surrogate)
    return mpc.PredictionModel(config.vehicle, config.battery, config.thermal, config.pack, config.control, surrogate)


def run(config: ScenarioConfig, *, fit=None, controller: mpc.RecedingController | None = None,
        until: float | None = None):
    """Simulate a scenario.

    Returns
    -------
    trace : SimTrace
    summary : SimSummary

    ``until`` stops the run early (for inspection); the controller still
    plans against the configured ``t_final``.
    """
    fit = rf.default_fit() if fit is None else fit
    env = build_environment(config)
    mcfg = config.controller_config()
    if controller is None:
        controller = mpc.RecedingController(prediction_model(config, fit), mcfg)
    plant = _Plant(config, fit)
    dt = config.scenario.dt_sim
    horizon = config.scenario.t_final if until is None else min(until, config.scenario.t_final)
    n_steps = int(round(horizon / dt))
    substeps = config.substeps
    state = initial_state(config)
    trace = SimTrace()
    decision = None
    status, error = "completed", ""
    last = ("none", 0, math.nan)
    for k in range(n_steps):
        t = k * dt
        x, v = state.vehicle.x_dist, state.vehicle.v
        if k % substeps == 0:
            preview = env.preview(t, x, v, mcfg.n_horizon, mcfg.dt_mpc, mcfg.preview_speed)
            decision = controller.step(mpc.MpcState(state.battery.soc, state.battery.t_batt, v), preview,
                                       t_cabin=state.cabin.t_cabin, v_c=state.battery.v_c, t_now=t, x_dist=x)
            rec = controller.records[-1]
            last = (rec.status, rec.iterations, rec.cost)
        theta, t_amb = env.theta(t, x), env.ambient(t)
        try:
            new_state, row = plant.step(state, decision.f_propulsion, decision.t_cabin_set, decision.t_batt_set,
                                        theta, t_amb, dt)
        except ColdMpcError as exc:
            status, error = "aborted", f"row {k}: {type(exc).__name__}: {exc}"
            log.error("simulation aborted at %s", error)
            break
        row.update(t=t, x_dist=x, v=v, grade=env.grade(t, x), t_ambient=t_amb, t_cabin=state.cabin.t_cabin,
                   t_batt=state.battery.t_batt, soc=state.battery.soc, v_c=state.battery.v_c,
                   t_cabin_set=decision.t_cabin_set, t_batt_set=decision.t_batt_set, solver_status=last[0],
                   solver_iterations=last[1], solver_cost=last[2])
        trace.append(row)
        state = new_state
        if state.battery.saturated and state.battery.soc <= 0.0:
            status, error = "empty_battery", f"row {k}: {EmptyBatteryError.__name__}: state of charge reached zero"
            log.error("battery empty at t=%.1f s", t + dt)
            break
    return trace, summarize(trace, state, controller, config, status, error)


def _integrate(trace, name, dt):
    return float(np.sum(trace.column(name)) * dt) if len(trace) else 0.0


def summarize(trace: SimTrace, final: PlantState, controller, config: ScenarioConfig, status="completed",
              error="") -> SimSummary:
    dt = config.scenario.dt_sim
    window = config.mpc.t_batt_window
    target = 0.5 * (window[0] + window[1])
    band = 0.5 * (window[1] - window[0])
    batt_settle = settle_time(trace, "t_batt", target, band) if len(trace) else None
    cabin_settle = None
    if len(trace):
        cabin_settle = settle_time(trace, "t_cabin", float(trace.column("t_cabin_set")[-1]), SETTLE_BAND)
    records = controller.records if controller is not None else []
    solver = {
        "solves": len(records),
        "status_counts": {s: sum(r.status == s for r in records) for s in sorted({r.status for r in records})},
        "max_iterations": max((r.iterations for r in records), default=0),
        "max_violation": max((r.max_violation for r in records if r.max_violation == r.max_violation), default=0.0),
        "max_residual": max((r.residual for r in records if r.residual == r.residual), default=0.0),
        "dominance_violations": sum(r.cost > r.warm_start_cost + 1e-9 * max(1.0, abs(r.warm_start_cost))
                                    for r in records),
        "clamp_events": sum(r.clamped for r in records),
        "hold_events": sum(r.held for r in records),
    }
    soc = trace.column("soc") if len(trace) else np.array([final.battery.soc])
    return SimSummary(
        status=status,
        duration=len(trace) * dt,
        final_distance=final.vehicle.x_dist,
        final_soc=final.battery.soc,
        final_t_batt=final.battery.t_batt,
        final_t_cabin=final.cabin.t_cabin,
        min_soc=float(min(soc.min(), final.battery.soc)),
        cabin_settle_time=cabin_settle,
        battery_settle_time=batt_settle,
        energy_propulsion=_integrate(trace, "p_propulsion", dt),
        energy_hvac=_integrate(trace, "p_hvac", dt),
        energy_heater=config.pack.heater_scale * _integrate(trace, "p_heater", dt),
        energy_pack=_integrate(trace, "p_pack", dt),
        peak_p_propulsion=float(trace.column("p_propulsion").max()) if len(trace) else 0.0,
        peak_p_hvac=float(trace.column("p_hvac").max()) if len(trace) else 0.0,
        arrival_window_met=bool(batt_settle is not None and window[0] <= final.battery.t_batt <= window[1]),
        solver=solver,
        error=error,
    )


# -- output ----------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, str):
        return value
    return "%.6g" % value


def write_trace_csv(trace: SimTrace, path):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in trace.rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_trace_csv(path) -> SimTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise InvalidArgumentError(f"{path}: unexpected trace header")
        rows = []
        for r in reader:
            rows.append(tuple(v if c in STRING_COLUMNS else float(v) for c, v in zip(TRACE_COLUMNS, r)))
    return SimTrace(rows)


FIGURES = {
    "fig_temperatures.csv": ("t", "t_ambient", "t_cabin", "t_cabin_set", "t_batt", "t_batt_set"),
    "fig_energies.csv": ("t", "e_propulsion", "e_hvac", "e_heater", "soc"),
    "fig_speed.csv": ("t", "v", "x_dist", "grade", "f_propulsion"),
}


def figure_tables(trace: SimTrace, dt: float, every: float = 1.0) -> dict:
    """Plot-ready columns, downsampled to one row per ``every`` seconds."""
    if len(trace) == 0:
        return {name: (cols, []) for name, cols in FIGURES.items()}
    data = {c: trace.column(c) for c in TRACE_COLUMNS if c not in STRING_COLUMNS}
    data["e_propulsion"] = np.cumsum(data["p_propulsion"]) * dt
    data["e_hvac"] = np.cumsum(data["p_hvac"]) * dt
    data["e_heater"] = np.cumsum(data["p_heater"]) * dt
    stride = max(1, int(round(every / dt)))
    idx = np.arange(0, len(trace), stride)
    return {name: (cols, np.column_stack([data[c][idx] for c in cols]).tolist()) for name, cols in FIGURES.items()}


def emit_outputs(trace: SimTrace, summary: SimSummary, out_dir, dt: float = 0.1, figures: bool = True) -> dict:
    """Write ``trace.csv``, ``summary.json`` and the figure tables into ``out_dir``."""
    out = Path(out_dir)
    paths = {"trace": out / "trace.csv", "summary": out / "summary.json"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, paths["trace"])
        paths["summary"].write_text(json.dumps(asdict(summary), indent=2, sort_keys=True) + "\n")
        if figures:
            for name, (cols, rows) in figure_tables(trace, dt).items():
                paths[name] = out / name
                with open(paths[name], "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(cols)
                    for r in rows:
                        w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OutputError(f"cannot write outputs under {out}: {exc}") from exc
    return paths

"""Acceptance suite.

Every criterion is one test. Each sub-check appends a single PASS/FAIL line
to the report printed at the end of the session, and the test fails if any
of its sub-checks did. Tolerances are pinned as module constants.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from coldmpc import battery as bat
from coldmpc import cabin as cab
from coldmpc import harness, mpc
from coldmpc import refrigerant as rf
from coldmpc import vehicle as veh
from coldmpc.mpc import MpcState

from conftest import ACCEPTANCE_LINES, load_clean
from test_mpc import dp_speed_oracle, flat, one_step_oracle, quiet

DISTANCE_MIN = 17_380.0  # m
WINDOW = (313.15, 315.15)  # K
BATTERY_SETTLE_MAX = 255.0  # s
CABIN_SETTLE_MAX = 450.0  # s
PROPULSION_PEAK = (0.5e5, 5e5)  # W
HVAC_PEAK = (1e3, 8e3)  # W
RUNTIME_MAX = 60.0  # s
SOC_RISE_MIN = 0.01
SOC_FINAL = (0.10, 0.16)
ETA_REGEN = (0.5, 0.9)
P_SAT_TOL = 0.02
SAT_LINE_TOL = 0.03
H2_TOL = 0.03
H2_PAIRS_MIN = 6
RC_TOL = 1e-3
CONSISTENCY_TOL = 1e-9
ODE_TOL = 1e-3
RESIDUAL_MAX = 1e-6
ONE_STEP_TOL = 1e-3
DP_TOL = 0.05
LEDGER_TOL = 0.01
DT_DRIFT_MAX = 0.005


class Report:
    def __init__(self, criterion):
        self.criterion = criterion
        self.failed = []

    def check(self, label, ok, detail):
        ok = bool(ok)
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {self.criterion:<4s} {label}: {detail}")
        if not ok:
            self.failed.append(label)

    def finish(self):
        assert not self.failed, f"criterion {self.criterion} failed: {', '.join(self.failed)}"


def _in(x, lo, hi):
    return lo <= x <= hi


def test_criterion_1_first_case_study(case1):
    cfg, trace, s, wall = case1
    r = Report("1")
    r.check("a distance", s.final_distance >= DISTANCE_MIN, f"{s.final_distance:.1f} m >= {DISTANCE_MIN:.0f} m")
    tb = trace.column("t_batt")
    t = trace.column("t")
    inside = (tb >= WINDOW[0]) & (tb <= WINDOW[1])
    entered = s.battery_settle_time is not None and bool(np.all(inside[t >= s.battery_settle_time]))
    r.check("b window held to arrival", entered and _in(s.final_t_batt, *WINDOW),
            f"entered at {s.battery_settle_time} s, final {s.final_t_batt:.3f} K in {WINDOW}")
    r.check("c battery settle", s.battery_settle_time is not None and s.battery_settle_time <= BATTERY_SETTLE_MAX,
            f"{s.battery_settle_time} s <= {BATTERY_SETTLE_MAX:.0f} s")
    r.check("d cabin settle", s.cabin_settle_time is not None and s.cabin_settle_time <= CABIN_SETTLE_MAX,
            f"{s.cabin_settle_time} s <= {CABIN_SETTLE_MAX:.0f} s")
    r.check("e soc floor", s.min_soc >= cfg.bounds.soc_min, f"min soc {s.min_soc:.4f} >= {cfg.bounds.soc_min}")
    r.check("f propulsion peak", _in(s.peak_p_propulsion, *PROPULSION_PEAK),
            f"{s.peak_p_propulsion:.4g} W in {PROPULSION_PEAK}")
    r.check("f hvac peak", _in(s.peak_p_hvac, *HVAC_PEAK), f"{s.peak_p_hvac:.4g} W in {HVAC_PEAK}")
    r.check("runtime", wall <= RUNTIME_MAX, f"{wall:.1f} s <= {RUNTIME_MAX:.0f} s")
    r.finish()


def test_criterion_2_second_case_study_shape(case2):
    cfg, trace, s, _ = case2
    r = Report("2")
    soc = trace.column("soc")
    peak = int(np.argmax(soc))
    rise = soc[peak] - soc[0]
    r.check("initial rise", rise >= SOC_RISE_MIN, f"{soc[0]:.3f} -> {soc[peak]:.4f} (+{rise:.4f} >= {SOC_RISE_MIN})")
    r.check("net decline", s.final_soc < soc[peak] and _in(s.final_soc, *SOC_FINAL),
            f"final soc {s.final_soc:.4f} in {SOC_FINAL}")
    r.check("eta_regen", _in(cfg.vehicle.eta_regen, *ETA_REGEN), f"{cfg.vehicle.eta_regen} in {ETA_REGEN}")
    r.finish()


def test_criterion_3_refrigerant_conformance(fit):
    r = Report("3")
    sat = rf.read_saturation_table()
    sup = rf.read_superheat_table()
    mask = (sat["T_K"] >= 243.15 - 1e-9) & (sat["T_K"] <= 313.15 + 1e-9)
    t = sat["T_K"][mask]

    def worst(func, col):
        return max(abs(func(fit, x) / ref - 1) for x, ref in zip(t, sat[col][mask]))

    err = worst(rf.sat_pressure, "p_kPa")
    r.check("sat_pressure", err <= P_SAT_TOL, f"max rel err {err:.2e} <= {P_SAT_TOL} at {t.size} points")
    for func, col in ((rf.sat_liquid_h, "h_f"), (rf.sat_vapor_h, "h_g"), (rf.sat_vapor_s, "s_g"),
                      (rf.sat_vapor_rho, "rho_g")):
        err = worst(func, col)
        r.check(col, err <= SAT_LINE_TOL, f"max rel err {err:.2e} <= {SAT_LINE_TOL}")
    h2 = np.array([rf.isentropic_outlet(fit, p, s) for p, s in zip(sup["p_kPa"], sup["s"])])
    err = float(np.max(np.abs(h2 / sup["h"] - 1)))
    r.check("isentropic h2", err <= H2_TOL and h2.size >= H2_PAIRS_MIN,
            f"max rel err {err:.2e} <= {H2_TOL} over {h2.size} pairs")
    r.finish()


def test_criterion_4_battery_oracle():
    r = Report("4")
    cell = bat.CellParams()
    dt, i = 0.01, 4.0
    s = bat.BatteryState(0.9)
    worst = 0.0
    for k in range(1, int(round(5 * cell.tau / dt)) + 1):
        s = bat.electrical_step(cell, s, i, dt)
        exact = i * cell.r1 * (1 - math.exp(-k * dt / cell.tau))
        worst = max(worst, abs(s.v_c - exact) / exact)
    r.check("RC response", worst <= RC_TOL and abs(cell.tau - 54.06) < 0.01,
            f"tau {cell.tau:.2f} s, max rel err {worst:.2e} <= {RC_TOL}")
    rng = np.random.default_rng(0)
    currents = rng.uniform(-20, 20, 3000)
    s, soc = bat.BatteryState(0.5), 0.5
    for c in currents:
        s = bat.electrical_step(cell, s, c, 0.1)
        soc -= 0.1 * c / cell.q
    r.check("coulomb count", s.soc == soc, f"soc {s.soc!r} == {soc!r}")
    worst = 0.0
    for soc, v_c, p in zip(rng.uniform(0, 1, 2000), rng.uniform(-0.2, 0.2, 2000), rng.uniform(-200, 200, 2000)):
        st = bat.BatteryState(soc, v_c)
        if p >= bat.max_cell_power(cell, st) or p == 0:
            continue
        i = bat.cell_current_from_power(cell, st, p)
        worst = max(worst, abs(i * bat.terminal_voltage(cell, st, i) / p - 1))
    r.check("I V = p", worst <= CONSISTENCY_TOL, f"max rel err {worst:.2e} <= {CONSISTENCY_TOL}")
    r.finish()


def _first_order_error(step, x0, x_eq, tau, dt, horizon):
    x, worst = x0, 0.0
    for k in range(1, int(round(horizon / dt)) + 1):
        x = step(x)
        exact = x_eq + (x0 - x_eq) * math.exp(-k * dt / tau)
        worst = max(worst, abs(x - exact))
    return worst / abs(x0 - x_eq)


def test_criterion_5_thermal_oracles():
    r = Report("5")
    p = cab.CabinParams()
    dt, t_amb, t_in, t0 = 0.01, 268.0, 310.0, 278.0
    g = p.ua + p.air_flow_capacity
    t_eq = (p.ua * t_amb + p.air_flow_capacity * t_in) / g
    err = _first_order_error(lambda x: cab.step(p, cab.CabinState(x), t_in, t_amb, dt).t_cabin, t0, t_eq,
                             p.heat_capacity / g, dt, 600.0)
    r.check("cabin ODE", err <= ODE_TOL, f"max err {err:.2e} of the initial gap <= {ODE_TOL}")
    th = bat.ThermalParams()
    q = 0.07
    tb_eq = t_amb + q / th.ua
    err = _first_order_error(
        lambda x: bat.thermal_step(th, bat.BatteryState(0.5, t_batt=x), q, 0.0, t_amb, dt).t_batt, t_amb, tb_eq,
        th.heat_capacity / th.ua, dt, 600.0)
    r.check("battery thermal ODE", err <= ODE_TOL, f"max err {err:.2e} of the initial gap <= {ODE_TOL}")
    cab_fixed = cab.step(p, cab.CabinState(281.3), 281.3, 281.3, 0.1).t_cabin == 281.3
    bat_fixed = bat.thermal_step(th, bat.BatteryState(0.5, t_batt=271.0), 0.0, 0.0, 271.0, 0.1).t_batt == 271.0
    r.check("fixed points", cab_fixed and bat_fixed, "state unchanged at equilibrium")
    r.finish()


def test_criterion_6_mpc_properties(case1, model, surrogate):
    cfg, trace, s, _ = case1
    r = Report("6")
    ctrl = mpc.RecedingController(model, cfg.controller_config())
    pairs = []
    original = ctrl.step

    def recording(*a, **kw):
        d = original(*a, **kw)
        pairs.append((ctrl.previous.decisions[0], d))
        return d

    ctrl.step = recording
    short, _ = harness.run(cfg, controller=ctrl, until=10.0)
    idx = [harness.TRACE_COLUMNS.index(c) for c in ("f_propulsion", "t_cabin_set", "t_batt_set")]
    applied_ok = all(d == ctrl.clamp(first)[0] for first, d in pairs) and all(
        tuple(row[i] for i in idx) == (d.f_propulsion, d.t_cabin_set, d.t_batt_set)
        for k, (_, d) in enumerate(pairs) for row in short.rows[k * cfg.substeps:(k + 1) * cfg.substeps])
    r.check("first input only", applied_ok and len(pairs) == 10, f"{len(pairs)} plans, trace rows match plan[0]")
    b = cfg.bounds
    boxes = (_in(trace.column("f_propulsion").min(), b.f_min, b.f_max)
             and _in(trace.column("f_propulsion").max(), b.f_min, b.f_max)
             and _in(trace.column("t_cabin_set").min(), b.t_cabin_set_min, b.t_cabin_set_max)
             and _in(trace.column("t_cabin_set").max(), b.t_cabin_set_min, b.t_cabin_set_max)
             and _in(trace.column("t_batt_set").min(), b.t_batt_set_min, b.t_batt_set_max)
             and _in(trace.column("t_batt_set").max(), b.t_batt_set_min, b.t_batt_set_max))
    r.check("decision boxes", boxes and s.solver["clamp_events"] == 0,
            f"{len(trace)} applied rows inside the boxes, {s.solver['clamp_events']} clamps")
    r.check("warm-start dominance", s.solver["dominance_violations"] == 0,
            f"{s.solver['dominance_violations']} violations over {s.solver['solves']} solves")
    r.check("scaled residual", s.solver["max_residual"] <= RESIDUAL_MAX,
            f"max {s.solver['max_residual']:.2e} <= {RESIDUAL_MAX}")
    mcfg = quiet(distance_target=17400.0, t_final=600.0)
    a, c = (mpc.RecedingController(model, mcfg).step(MpcState(0.3, 295.0, 29.0), flat(20), t_cabin=280.0)
            for _ in range(2))
    r.check("determinism", a == c, "two identical solves give identical decisions")
    one = quiet(n_horizon=1)
    worst = 0.0
    for v0 in (b.v_min, 25.5, 27.0):
        sol = mpc.solve_horizon(model, one, MpcState(0.5, 300.0, v0), flat(1), t_cabin=290.0)
        worst = max(worst, abs(sol.cost / one_step_oracle(surrogate, v0, 290.0, 268.0, one)[1] - 1))
    r.check("one-step oracle", worst <= ONE_STEP_TOL, f"max rel cost err {worst:.2e} <= {ONE_STEP_TOL}")
    r.finish()


def test_criterion_7_speed_profile_oracle(model):
    r = Report("7")
    n, dt, t_final = 20, 1.0, 600.0
    for v0, avg in ((26.0, 29.0), (25.0, 30.0)):
        mcfg = quiet(n_horizon=n, w1=0.0, w3=0.0, enforce_thermal_bounds=False, distance_target=avg * t_final,
                     t_final=t_final, max_iterations=100)
        sol = mpc.solve_horizon(model, mcfg, MpcState(0.5, 300.0, v0), flat(n), t_cabin=290.0)
        v = sol.predicted_states[:, 2]
        energy = sum(veh.propulsion_power(sol.inputs[0, k], v[k], model.vehicle) * dt for k in range(n))
        oracle = dp_speed_oracle(v0, n, dt, avg * n * dt)
        err = abs(energy / oracle - 1)
        r.check(f"v0={v0} avg={avg}", err <= DP_TOL and sol.max_violation <= mcfg.constraint_tolerance,
                f"MPC {energy / 1e3:.2f} kJ vs DP {oracle / 1e3:.2f} kJ, rel err {err:.3f} <= {DP_TOL}")
    r.finish()


def test_criterion_8_harness(case1, tmp_path):
    cfg, trace, s, _ = case1
    r = Report("8")
    parts = s.energy_propulsion + s.energy_hvac + s.energy_heater
    err = abs(s.energy_pack / parts - 1)
    r.check("energy ledger", err <= LEDGER_TOL, f"pack {s.energy_pack:.6g} J vs sum {parts:.6g} J, rel {err:.1e}")
    again, s2 = harness.run(load_clean("case_study_1"))
    harness.write_trace_csv(trace, tmp_path / "a.csv")
    harness.write_trace_csv(again, tmp_path / "b.csv")
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes() and again.rows == trace.rows
    r.check("bit-identical rerun", same, f"{len(trace)} rows compared")
    fine_cfg = load_clean("case_study_1", **{"scenario.dt_sim": cfg.scenario.dt_sim / 2})
    _, fine = harness.run(fine_cfg)
    drift = abs(fine.final_soc / s.final_soc - 1)
    r.check("dt refinement", drift < DT_DRIFT_MAX,
            f"final soc {s.final_soc:.5f} vs {fine.final_soc:.5f} at dt/2, drift {drift:.2e} < {DT_DRIFT_MAX}")
    r.finish()

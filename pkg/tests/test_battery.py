import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldmpc import battery as bat
from coldmpc.errors import InvalidArgumentError, PowerLimitError

CELL = bat.CellParams()
TH = bat.ThermalParams()
PACK = bat.PackParams()


def test_terminal_voltage_examples():
    assert bat.terminal_voltage(CELL, bat.BatteryState(0.37), 0.0) == CELL.ocv_curve(0.37)
    assert bat.terminal_voltage(CELL, bat.BatteryState(0.5), 0.0) == pytest.approx(3.6)
    v = bat.terminal_voltage(CELL, bat.BatteryState(0.5, 0.0411), 4.0)
    assert v == pytest.approx(3.6 - 0.0411 - 4 * 0.013513)
    assert v == pytest.approx(3.5049, abs=1e-4)


def test_electrical_step_examples():
    s = bat.BatteryState(0.5)
    for _ in range(1000):
        s = bat.electrical_step(CELL, s, 4.0, 0.01)
    assert 0.5 - s.soc == pytest.approx(40 / 14322, rel=1e-9)
    # tau = R1 C1 = 54.06 s
    assert s.v_c == pytest.approx(4 * 0.01028 * (1 - math.exp(-10 / 54.06)), rel=2e-3)
    assert s.v_c == pytest.approx(0.00694, abs=1e-5)
    rest = bat.BatteryState(0.3)
    assert bat.electrical_step(CELL, rest, 0.0, 1.0) == rest


def test_rc_oracle_over_five_tau():
    dt, i = 0.01, 4.0
    tau = CELL.tau
    assert tau == pytest.approx(54.06, abs=0.01)
    s = bat.BatteryState(0.9)
    worst = 0.0
    n = int(round(5 * tau / dt))
    for k in range(1, n + 1):
        s = bat.electrical_step(CELL, s, i, dt)
        exact = i * CELL.r1 * (1 - math.exp(-k * dt / tau))
        worst = max(worst, abs(s.v_c - exact) / exact)
    assert worst < 1e-3


def test_coulomb_counting_exact():
    currents = [3.0, -1.5, 0.2, 7.0, 0.0, -4.0] * 50
    s = bat.BatteryState(0.6)
    soc = 0.6
    for i in currents:
        s = bat.electrical_step(CELL, s, i, 0.1)
        soc -= 0.1 * i / CELL.q
    assert s.soc == soc
    assert 0.6 - s.soc == pytest.approx(0.1 * sum(currents) / CELL.q, rel=1e-9)


def test_soc_clamps_with_flag():
    s = bat.electrical_step(CELL, bat.BatteryState(1e-6), 50.0, 1.0)
    assert s.soc == 0.0 and s.saturated


def test_thermal_examples():
    s = bat.BatteryState(0.5, t_batt=268.0)
    assert bat.thermal_step(TH, s, 0.0, 0.0, 268.0, 1.0).t_batt == 268.0
    warm = bat.thermal_step(TH, bat.BatteryState(0.5, t_batt=293.0), 0.0, 100.0, 268.0, 1.0)
    assert warm.t_batt - 293.0 == pytest.approx((100 - 0.053 * 25) / 66.5)
    assert warm.t_batt - 293.0 == pytest.approx(1.4838, abs=1e-4)
    with pytest.raises(InvalidArgumentError):
        bat.thermal_step(TH, s, -1.0, 0.0, 268.0, 1.0)


def test_thermal_approach_to_equilibrium():
    q, p, t_amb = 0.05, 0.02, 268.0
    t_eq = t_amb + (q + p) / TH.ua
    tau = TH.heat_capacity / TH.ua
    assert tau == pytest.approx(1255, abs=1)
    s = bat.BatteryState(0.5, t_batt=t_amb)
    dt = 1.0
    for _ in range(int(7 * tau / dt)):
        s = bat.thermal_step(TH, s, q, p, t_amb, dt)
    assert abs(s.t_batt - t_eq) <= 0.01 * (t_eq - t_amb)


def test_ohmic_heat():
    assert bat.ohmic_heat(CELL, bat.BatteryState(0.5), 0.0) == 0.0
    q = bat.ohmic_heat(CELL, bat.BatteryState(0.5, 0.0411), 4.0)
    assert q == pytest.approx(16 * 0.013513 + 0.0411**2 / 0.01028)
    assert q == pytest.approx(0.3806, abs=1e-4)


def test_cell_current_examples():
    s = bat.BatteryState(0.5)
    assert bat.cell_current_from_power(CELL, s, 0.0) == 0.0
    i = bat.cell_current_from_power(CELL, s, 20.2)
    small_root = (3.6 - math.sqrt(3.6**2 - 4 * 0.013513 * 20.2)) / (2 * 0.013513)
    assert i == pytest.approx(small_root, rel=1e-12)
    assert i == pytest.approx(5.72, rel=5e-3)
    assert bat.cell_current_from_power(CELL, s, -10.0) < 0


def test_power_limit_error():
    s = bat.BatteryState(0.5)
    p_max = 3.6**2 / (4 * CELL.r0)
    assert bat.max_cell_power(CELL, s) == pytest.approx(p_max)
    with pytest.raises(PowerLimitError) as info:
        bat.cell_current_from_power(CELL, s, p_max * (1 + 1e-9))
    assert info.value.p_max == pytest.approx(p_max)


def test_pack_aggregate():
    p_cell, p_heat = bat.pack_aggregate(PACK, 113_000.0, 0.0, 0.0)
    assert p_cell == pytest.approx(20.18, abs=0.01)
    assert bat.pack_aggregate(PACK, 0.0, 0.0, 0.0) == (0.0, 0.0)
    p_cell, p_heat = bat.pack_aggregate(PACK, 0.0, 0.0, 40.0)
    assert p_cell * PACK.n_cells == pytest.approx(40.0) and p_heat == 40.0
    three = bat.PackParams(heater_scale=3)
    assert bat.pack_aggregate(three, 0.0, 0.0, 40.0)[0] * three.n_cells == pytest.approx(120.0)


def test_ocv_table(tmp_path):
    path = tmp_path / "ocv.csv"
    path.write_text("soc,volts\n0,3.0\n0.5,3.7\n1,4.1\n")
    curve = bat.OcvCurve.from_csv(path)
    assert curve(0.25) == pytest.approx(3.35)
    assert curve.slope_at(0.75) == pytest.approx(0.8)
    with pytest.raises(InvalidArgumentError):
        bat.OcvCurve([0, 1], [4.0, 3.0])


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-0.2, 0.2), st.floats(-200, 200))
def test_current_and_voltage_consistent(soc, v_c, p):
    s = bat.BatteryState(soc, v_c)
    if p > bat.max_cell_power(CELL, s):
        return
    i = bat.cell_current_from_power(CELL, s, p)
    if p == 0:
        assert i == 0
    else:
        assert i * bat.terminal_voltage(CELL, s, i) == pytest.approx(p, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-50, 50), st.floats(0.01, 10))
def test_terminal_voltage_decreasing(soc, i, di):
    s = bat.BatteryState(soc)
    assert bat.terminal_voltage(CELL, s, i + di) < bat.terminal_voltage(CELL, s, i)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(-0.5, 0.5))
def test_ohmic_heat_non_negative(i, v_c):
    assert bat.ohmic_heat(CELL, bat.BatteryState(0.5, v_c), i) >= 0

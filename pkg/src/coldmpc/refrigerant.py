"""R134a property fits and the heat-pump cycle.

Cycle states follow the usual numbering: 1 evaporator outlet (saturated
vapour), 2 compressor outlet (isentropic, superheated), 3 condenser outlet
(saturated liquid), 4 expansion-valve outlet (two-phase, ``h4 = h3``).

Units: pressure kPa, temperature K, enthalpy kJ/kg, entropy kJ/(kg K),
density kg/m^3. Powers returned to callers are in W.

The property fits are least-squares forms against a bundled reference
table (``data/r134a_saturation.csv`` and ``data/r134a_superheat.csv``):

* ``ln p_sat = c0 + c1/T + c2 ln T + c3 T``
* saturated-line ``h_f``, ``h_g``, ``s_g``, ``s_f``, ``rho_f`` and ``ln rho_g``
  as degree-4 polynomials in ``tau = (T - 273.15)/100``
* superheated vapour along an isobar integrates ``dh = T ds`` with an
  effective heat capacity ``cp(p) = a0 + a1 ln(p/100 kPa)``, so that
  ``h(p, s) = h_g + T_sat cp (exp((s - s_g)/cp) - 1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import least_squares

from .cabin import CabinParams
from .errors import CycleCouplingError, InvalidArgumentError, InvalidCycleError, PropertyRangeError

T_MIN = 233.15
T_MAX = 343.15
T_REF = 273.15
FIT_FORMAT = "coldmpc-refrigerant-fit"
FIT_VERSION = 1
SAT_COLUMNS = ("T_K", "p_kPa", "h_f", "h_g", "s_g", "rho_g")
POLY_DEGREE = 4
PRESSURE_RANGE_TOL = 1e-3
LIQUID_DENSITY_FALLBACK = 1200.0  # kg/m^3, only used for reporting


def _tau(t):
    return (t - T_REF) / 100.0


@dataclass(frozen=True)
class PropertyFit:
    sat_pressure_coeffs: tuple
    sat_liquid_h_coeffs: tuple
    sat_liquid_s_coeffs: tuple
    sat_liquid_rho_coeffs: tuple
    sat_vapor_h_coeffs: tuple
    sat_vapor_s_coeffs: tuple
    sat_vapor_rho_coeffs: tuple  # fit of ln(rho_g)
    superheat_h_model: tuple  # (a0, a1) of cp(p)
    t_min: float = T_MIN
    t_max: float = T_MAX
    s_min: float = 1.60
    s_max: float = 1.85
    fluid: str = "R134a"


@dataclass(frozen=True)
class CycleState:
    p: float
    t: float
    h: float
    s: float
    rho: float


@dataclass(frozen=True)
class CompressorParams:
    v_comp: float = 33e-6  # m^3, multiplied by omega * 2 pi / 60
    eta_flow: float = 0.9
    eta_compressor: float = 0.8
    omega_max: float = 6000.0  # RPM

    def __post_init__(self):
        if not self.v_comp > 0 or not self.omega_max > 0:
            raise InvalidArgumentError("v_comp and omega_max must be positive")
        for name in ("eta_flow", "eta_compressor"):
            if not 0 < getattr(self, name) <= 1:
                raise InvalidArgumentError(f"compressor.{name} must lie in (0, 1]")


@dataclass(frozen=True)
class CycleParams:
    """Temperature offsets and protection limits of the heat-pump loop."""

    evaporator_offset: float = 5.0  # T1 = T_ambient - offset
    condenser_offset: float = 5.0  # T3 = T_air_in + offset
    condensing_limit: float = 338.15  # high-pressure cutoff, as a saturation temperature
    max_iterations: int = 10
    tolerance: float = 0.01  # K on t_air_in


@dataclass(frozen=True)
class CycleResult:
    states: tuple  # CycleState 1..4
    mdot: float  # kg/s
    t_air_in: float  # K
    q_cond: float  # W
    w_shaft: float  # W
    p_battery: float  # W
    iterations: int = 0

    @property
    def cop(self) -> float:
        return self.q_cond / self.w_shaft if self.w_shaft > 0 else math.inf


# -- reference tables and fitting -------------------------------------------

def data_path(name: str) -> Path:
    return Path(str(resources.files("coldmpc") / "data" / name))


def read_saturation_table(path=None) -> dict:
    path = Path(path) if path is not None else data_path("r134a_saturation.csv")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SAT_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise InvalidArgumentError(f"saturation table {path} lacks columns {missing}")
        rows = list(reader)
    return {k: np.array([float(r[k]) for r in rows]) for k in reader.fieldnames}


def read_superheat_table(path=None) -> dict:
    path = Path(path) if path is not None else data_path("r134a_superheat.csv")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: np.array([float(r[k]) for r in rows]) for k in reader.fieldnames}


def fit_properties(sat_table: dict, superheat_table: dict) -> PropertyFit:
    """Least-squares property fit against reference tables."""
    t = sat_table["T_K"]
    x = _tau(t)
    basis = np.column_stack([np.ones_like(t), 1 / t, np.log(t), t])
    c_p, *_ = np.linalg.lstsq(basis, np.log(sat_table["p_kPa"]), rcond=None)

    def poly(y):
        return tuple(P.polyfit(x, y, POLY_DEGREE).tolist())

    h_f = poly(sat_table["h_f"])
    # Clausius: s_g - s_f = (h_g - h_f) / T on the saturation line
    s_f = poly(sat_table["s_g"] - (sat_table["h_g"] - sat_table["h_f"]) / t)
    rho_f = poly(sat_table["rho_f"] if "rho_f" in sat_table else np.full_like(t, LIQUID_DENSITY_FALLBACK))
    partial = PropertyFit(
        sat_pressure_coeffs=tuple(c_p.tolist()),
        sat_liquid_h_coeffs=h_f,
        sat_liquid_s_coeffs=s_f,
        sat_liquid_rho_coeffs=rho_f,
        sat_vapor_h_coeffs=poly(sat_table["h_g"]),
        sat_vapor_s_coeffs=poly(sat_table["s_g"]),
        sat_vapor_rho_coeffs=poly(np.log(sat_table["rho_g"])),
        superheat_h_model=(1.0, 0.0),
        t_min=float(t.min()),
        t_max=float(t.max()),
    )
    p2 = superheat_table["p_kPa"]
    s2 = superheat_table["s"]
    h_ref = superheat_table["h"]
    if "T3_K" in superheat_table:
        t_sat = superheat_table["T3_K"]
    else:
        t_sat = np.array([sat_temperature(partial, p) for p in p2])

    def resid(a):
        return _superheat_h(partial, t_sat, s2, a) - h_ref

    sol = least_squares(resid, x0=[1.0, 0.0], x_scale=[1.0, 0.1])
    s_all = np.concatenate([sat_table["s_g"], s2])
    return PropertyFit(
        **{**partial.__dict__,
           "superheat_h_model": tuple(sol.x.tolist()),
           "s_min": round(float(s_all.min()) - 0.1, 4),
           "s_max": round(float(s_all.max()) + 0.1, 4)})


_FIT_FIELDS = ("sat_pressure_coeffs", "sat_liquid_h_coeffs", "sat_liquid_s_coeffs", "sat_liquid_rho_coeffs",
               "sat_vapor_h_coeffs", "sat_vapor_s_coeffs", "sat_vapor_rho_coeffs", "superheat_h_model")


def save_fit(fit: PropertyFit, path):
    lines = [
        "# refrigerant property fit; regenerate with `coldmpc fit-refrigerant`",
        f"format = {FIT_FORMAT}",
        f"version = {FIT_VERSION}",
        f"fluid = {fit.fluid}",
        f"t_min = {fit.t_min!r}",
        f"t_max = {fit.t_max!r}",
        f"s_min = {fit.s_min!r}",
        f"s_max = {fit.s_max!r}",
    ]
    for name in _FIT_FIELDS:
        lines.append(f"{name} = " + ", ".join(repr(float(c)) for c in getattr(fit, name)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_fit(path=None) -> PropertyFit:
    """Load a serialized fit; the bundled R134a fit when ``path`` is None."""
    path = Path(path) if path is not None else data_path("r134a_fit.txt")
    entries = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    if entries.get("format") != FIT_FORMAT:
        raise InvalidArgumentError(f"{path} is not a refrigerant fit file")
    if int(entries.get("version", -1)) != FIT_VERSION:
        raise InvalidArgumentError(f"{path}: unsupported fit version {entries.get('version')}")
    kwargs = {name: tuple(float(c) for c in entries[name].split(",")) for name in _FIT_FIELDS}
    for name in ("t_min", "t_max", "s_min", "s_max"):
        kwargs[name] = float(entries[name])
    return PropertyFit(fluid=entries.get("fluid", "R134a"), **kwargs)


_default_fit = None


def default_fit() -> PropertyFit:
    global _default_fit
    if _default_fit is None:
        _default_fit = load_fit()
    return _default_fit


# -- property functions --------------------------------------------------------

def _check_t(fit, t, quantity="T"):
    if t < fit.t_min - 1e-9 or t > fit.t_max + 1e-9:
        raise PropertyRangeError(quantity, t, fit.t_min, fit.t_max)


def _horner(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _ln_psat(fit, t):
    c0, c1, c2, c3 = fit.sat_pressure_coeffs
    return c0 + c1 / t + c2 * np.log(t) + c3 * t


def sat_pressure(fit: PropertyFit, t: float) -> float:
    """Saturation pressure [kPa] at temperature ``t`` [K]."""
    _check_t(fit, t)
    return float(np.exp(_ln_psat(fit, t)))


def sat_temperature(fit: PropertyFit, p: float) -> float:
    """Inverse of :func:`sat_pressure` by Newton iteration.

    Pressures up to ``PRESSURE_RANGE_TOL`` (relative) outside the fitted
    range are accepted and mapped onto the nearest end, so that reference
    pressures at the table ends remain usable despite the small fit error.
    """
    lo = float(np.exp(_ln_psat(fit, fit.t_min)))
    hi = float(np.exp(_ln_psat(fit, fit.t_max)))
    if p < lo * (1 - PRESSURE_RANGE_TOL) or p > hi * (1 + PRESSURE_RANGE_TOL):
        raise PropertyRangeError("p", p, lo, hi)
    p = min(max(p, lo), hi)
    c0, c1, c2, c3 = fit.sat_pressure_coeffs
    target = math.log(p)
    # start from the Clausius-Clapeyron interpolation between the bounds
    t = 1.0 / (1 / fit.t_min + (target - math.log(lo)) / (math.log(hi) - math.log(lo)) * (1 / fit.t_max - 1 / fit.t_min))
    for _ in range(50):
        f = c0 + c1 / t + c2 * math.log(t) + c3 * t - target
        df = -c1 / t**2 + c2 / t + c3
        step = f / df
        t -= step
        if abs(step) < 1e-12:
            break
    return t


def sat_liquid_h(fit, t):
    _check_t(fit, t)
    return _horner(fit.sat_liquid_h_coeffs, _tau(t))


def sat_liquid_s(fit, t):
    _check_t(fit, t)
    return _horner(fit.sat_liquid_s_coeffs, _tau(t))


def sat_liquid_rho(fit, t):
    _check_t(fit, t)
    return _horner(fit.sat_liquid_rho_coeffs, _tau(t))


def sat_vapor_h(fit, t):
    _check_t(fit, t)
    return _horner(fit.sat_vapor_h_coeffs, _tau(t))


def sat_vapor_s(fit, t):
    _check_t(fit, t)
    return _horner(fit.sat_vapor_s_coeffs, _tau(t))


def sat_vapor_rho(fit, t):
    _check_t(fit, t)
    return math.exp(_horner(fit.sat_vapor_rho_coeffs, _tau(t)))


def _superheat_cp(fit, t_sat, a=None):
    a0, a1 = fit.superheat_h_model if a is None else a
    return a0 + a1 * (_ln_psat(fit, t_sat) - math.log(100.0))


def _superheat_h(fit, t_sat, s, a=None):
    """Enthalpy at entropy ``s`` on the isobar whose saturation temperature is ``t_sat``."""
    tau = _tau(t_sat)
    h_g = P.polyval(tau, fit.sat_vapor_h_coeffs)
    ds = np.maximum(s - P.polyval(tau, fit.sat_vapor_s_coeffs), 0.0)
    cp = _superheat_cp(fit, t_sat, a)
    return h_g + t_sat * cp * np.expm1(ds / cp)


def _superheat_t(fit, t_sat, s):
    ds = max(s - _horner(fit.sat_vapor_s_coeffs, _tau(t_sat)), 0.0)
    return t_sat * math.exp(ds / _superheat_cp(fit, t_sat))


def _check_s(fit, s):
    if s < fit.s_min or s > fit.s_max:
        raise PropertyRangeError("s", s, fit.s_min, fit.s_max)


def isentropic_outlet(fit: PropertyFit, p2: float, s1: float) -> float:
    """Compressor outlet enthalpy [kJ/kg] for isentropic compression to ``p2``."""
    _check_s(fit, s1)
    t_sat = sat_temperature(fit, p2)
    return float(_superheat_h(fit, t_sat, s1))


# -- cycle states -------------------------------------------------------------

def saturated_vapor_state(fit, t) -> CycleState:
    return CycleState(p=sat_pressure(fit, t), t=t, h=sat_vapor_h(fit, t), s=sat_vapor_s(fit, t),
                      rho=sat_vapor_rho(fit, t))


def saturated_liquid_state(fit, t) -> CycleState:
    return CycleState(p=sat_pressure(fit, t), t=t, h=sat_liquid_h(fit, t), s=sat_liquid_s(fit, t),
                      rho=sat_liquid_rho(fit, t))


def state1_from_ambient(fit: PropertyFit, t_ambient: float, offset: float = 5.0) -> CycleState:
    """Evaporator outlet: saturated vapour ``offset`` K below ambient."""
    return saturated_vapor_state(fit, t_ambient - offset)


def state3_from_supply_air(fit: PropertyFit, t_air_in: float, offset: float = 5.0) -> CycleState:
    """Condenser outlet: saturated liquid ``offset`` K above the supply air."""
    return saturated_liquid_state(fit, t_air_in + offset)


def state2_isentropic(fit, state1: CycleState, state3: CycleState) -> CycleState:
    t_sat = state3.t
    _check_s(fit, state1.s)
    h2 = float(_superheat_h(fit, t_sat, state1.s))
    t2 = _superheat_t(fit, t_sat, state1.s)
    rho2 = sat_vapor_rho(fit, t_sat) * t_sat / t2
    return CycleState(p=state3.p, t=t2, h=h2, s=state1.s, rho=rho2)


def state4_throttled(fit, state1: CycleState, state3: CycleState) -> CycleState:
    t1 = state1.t
    h_f, h_g = sat_liquid_h(fit, t1), state1.h
    quality = min(max((state3.h - h_f) / (h_g - h_f), 0.0), 1.0)
    s = sat_liquid_s(fit, t1) + quality * (state1.s - sat_liquid_s(fit, t1))
    rho = 1.0 / (quality / state1.rho + (1 - quality) / sat_liquid_rho(fit, t1))
    return CycleState(p=state1.p, t=t1, h=state3.h, s=s, rho=rho)


def mass_flow(comp: CompressorParams, omega: float, rho1: float) -> float:
    """Refrigerant mass flow [kg/s] at compressor speed ``omega`` [RPM]."""
    if omega < 0 or omega > comp.omega_max:
        raise InvalidArgumentError(f"compressor speed {omega} RPM outside [0, {comp.omega_max}]")
    return comp.v_comp * comp.eta_flow * omega * rho1 * (2 * math.pi / 60)


def compressor_power(comp: CompressorParams, mdot: float, h1: float, h2: float):
    """Shaft power and battery-side electrical power [W]."""
    if h2 < h1:
        raise InvalidCycleError(f"compressor outlet enthalpy {h2:.3f} below inlet {h1:.3f}")
    if mdot < 0:
        raise InvalidArgumentError("mass flow must be non-negative")
    w_shaft = mdot * (h2 - h1) * 1000.0
    return w_shaft, w_shaft / comp.eta_compressor


def supply_air_temperature(cabin: CabinParams, t_return: float, q_cond: float) -> float:
    """Air temperature leaving the condenser after absorbing ``q_cond`` [W]."""
    return t_return + q_cond / cabin.air_flow_capacity


def _condenser_lift(fit, s1, t3):
    """``h2 - h3`` [kJ/kg] for condensing temperature ``t3``."""
    return float(_superheat_h(fit, t3, s1)) - _horner(fit.sat_liquid_h_coeffs, _tau(t3))


def condenser_supply_air(fit: PropertyFit, state1: CycleState, mdot_f: float, cabin: CabinParams,
                         t_return: float, params: CycleParams = CycleParams()):
    """Solve the condenser/supply-air coupling.

    The supply air is heated by ``Q = mdot_f (h2 - h3)`` while the condensing
    temperature sits ``offset`` K above the supply air. The residual is
    monotone in ``t_air_in``, so a bracketed Newton iteration converges in a
    handful of steps.

    Returns
    -------
    t_air_in : float
    iterations : int
    """
    if mdot_f < 0:
        raise InvalidArgumentError("mass flow must be non-negative")
    if mdot_f == 0:
        return float(t_return), 0
    off = params.condenser_offset
    k = mdot_f * 1000.0 / cabin.air_flow_capacity
    lo = t_return
    hi = fit.t_max - off
    _check_t(fit, lo + off, "T3")

    def g(ta):
        return ta - t_return - k * _condenser_lift(fit, state1.s, ta + off)

    if g(hi) < 0:
        raise CycleCouplingError("no supply-air fixed point inside the property range", hi)
    ta = min(t_return + k * _condenser_lift(fit, state1.s, t_return + off), hi)
    step = math.inf
    for it in range(1, params.max_iterations + 1):
        r = g(ta)
        if r > 0:
            hi = ta
        else:
            lo = ta
        h = 1e-4 if ta + 1e-4 <= fit.t_max - off else -1e-4
        slope = (g(ta + h) - r) / h
        nxt = ta - r / slope
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        step = nxt - ta
        ta = nxt
        if abs(step) < 1e-3 * params.tolerance:
            return ta, it
    if abs(step) < params.tolerance:
        return ta, params.max_iterations
    raise CycleCouplingError(f"supply-air coupling not converged in {params.max_iterations} iterations", ta)


def max_compressor_speed(fit: PropertyFit, comp: CompressorParams, cabin: CabinParams, t_ambient: float,
                         t_return: float, params: CycleParams = CycleParams()) -> float:
    """Highest compressor speed [RPM] that keeps condensing below the cutoff."""
    t3 = params.condensing_limit
    headroom = t3 - params.condenser_offset - t_return
    if headroom <= 0:
        return 0.0
    state1 = state1_from_ambient(fit, t_ambient, params.evaporator_offset)
    lift = _condenser_lift(fit, state1.s, t3)
    mdot = cabin.air_flow_capacity * headroom / (lift * 1000.0)
    omega = mdot / (comp.v_comp * comp.eta_flow * state1.rho * 2 * math.pi / 60)
    return min(omega, comp.omega_max)


def solve_cycle(fit: PropertyFit, comp: CompressorParams, cabin: CabinParams, omega: float, t_ambient: float,
                t_return: float, params: CycleParams = CycleParams()) -> CycleResult:
    """Steady heat-pump cycle at compressor speed ``omega``.

    The air returning from the cabin (at ``t_return``) passes over the
    condenser and enters the cabin at ``t_air_in``.
    """
    s1 = state1_from_ambient(fit, t_ambient, params.evaporator_offset)
    mdot = mass_flow(comp, omega, s1.rho)
    t_air_in, iterations = condenser_supply_air(fit, s1, mdot, cabin, t_return, params)
    s3 = state3_from_supply_air(fit, t_air_in, params.condenser_offset)
    s2 = state2_isentropic(fit, s1, s3)
    s4 = state4_throttled(fit, s1, s3)
    if mdot == 0:
        return CycleResult((s1, s2, s3, s4), 0.0, t_air_in, 0.0, 0.0, 0.0, 0)
    w_shaft, p_batt = compressor_power(comp, mdot, s1.h, s2.h)
    q_cond = mdot * (s2.h - s3.h) * 1000.0
    return CycleResult((s1, s2, s3, s4), mdot, t_air_in, q_cond, w_shaft, p_batt, iterations)


def conformance_report(fit: PropertyFit, sat_table: dict | None = None, superheat_table: dict | None = None,
                       t_range=(243.15, 313.15)) -> dict:
    """Largest relative deviation of each fitted property from the tables.

    Saturation properties are compared at table temperatures inside
    ``t_range``; the isentropic outlet enthalpy at every superheat row.
    """
    sat = read_saturation_table() if sat_table is None else sat_table
    sup = read_superheat_table() if superheat_table is None else superheat_table
    t = sat["T_K"]
    mask = (t >= t_range[0] - 1e-9) & (t <= t_range[1] + 1e-9)
    checks = {
        "sat_pressure": (sat_pressure, "p_kPa"),
        "sat_liquid_h": (sat_liquid_h, "h_f"),
        "sat_vapor_h": (sat_vapor_h, "h_g"),
        "sat_vapor_s": (sat_vapor_s, "s_g"),
        "sat_vapor_rho": (sat_vapor_rho, "rho_g"),
    }
    if "rho_f" in sat:
        checks["sat_liquid_rho"] = (sat_liquid_rho, "rho_f")
    report = {}
    for name, (func, col) in checks.items():
        ref = sat[col][mask]
        got = np.array([func(fit, x) for x in t[mask]])
        report[name] = float(np.max(np.abs(got / ref - 1.0)))
    h2 = np.array([isentropic_outlet(fit, p, s) for p, s in zip(sup["p_kPa"], sup["s"])])
    report["isentropic_h2"] = float(np.max(np.abs(h2 / sup["h"] - 1.0)))
    return report

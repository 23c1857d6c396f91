"""Scenario configuration files.

The format is plain text, one ``section.key = value`` per line, ``#``
comments and blank lines ignored. Tuples are comma separated. Every key
has a typed default taken from the dataclass it configures, so unknown
keys are rejected rather than silently ignored. Any key can be
overridden from the environment as ``COLDMPC_<SECTION>__<KEY>``, e.g.
``COLDMPC_MPC__W1=0.5``.

Sections
--------
scenario  name, t_final, dt_sim, distance_target, output_dir
initial   v, soc, t_batt, t_cabin, v_c, x_dist
route     kind (sinusoid, csv or waypoints) and its parameters
vehicle, cabin, battery, thermal, pack, compressor, cycle, control
          physical parameters and gains
mpc       horizon, weights, arrival window and solver settings
bounds    the twelve state and decision limits used by the controller
surrogate grid of the HVAC power fit
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import refrigerant as rf
from .battery import CellParams, OcvCurve, PackParams, ThermalParams
from .cabin import CabinParams
from .control import LowLevelGains
from .errors import ColdMpcError, ConfigError
from .mpc import MpcBounds, MpcConfig, SurrogateGrid
from .vehicle import VehicleParams

ENV_PREFIX = "COLDMPC_"


@dataclass(frozen=True)
class ScenarioSettings:
    name: str = "scenario"
    t_final: float = 600.0  # s
    dt_sim: float = 0.1  # s
    distance_target: float = 17400.0  # m
    output_dir: str = "out"


@dataclass(frozen=True)
class InitialState:
    v: float = 29.0576  # m/s, 65 MPH
    soc: float = 0.2
    t_batt: float = 293.0  # K
    t_cabin: float = 278.0  # K
    v_c: float = 0.0  # V
    x_dist: float = 0.0  # m


@dataclass(frozen=True)
class RouteSpec:
    kind: str = "sinusoid"  # sinusoid | csv | waypoints
    grade_amplitude: float = 0.2
    grade_period: float = 200.0  # s
    t_ambient_mean: float = 273.0  # K
    t_ambient_amplitude: float = 5.0  # K
    t_ambient_period: float = 300.0  # s
    sample_dt: float = 1.0  # s
    file: str = ""
    smoothing_window: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: ScenarioSettings = ScenarioSettings()
    initial: InitialState = InitialState()
    route: RouteSpec = RouteSpec()
    vehicle: VehicleParams = VehicleParams()
    cabin: CabinParams = CabinParams()
    battery: CellParams = CellParams()
    thermal: ThermalParams = ThermalParams()
    pack: PackParams = PackParams()
    compressor: rf.CompressorParams = rf.CompressorParams()
    cycle: rf.CycleParams = rf.CycleParams()
    control: LowLevelGains = LowLevelGains()
    mpc: MpcConfig = MpcConfig()
    bounds: MpcBounds = MpcBounds()
    surrogate: SurrogateGrid = SurrogateGrid()
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        s = self.scenario
        if not s.t_final >= 0:
            raise ConfigError("scenario.t_final must be non-negative")
        if not s.dt_sim > 0:
            raise ConfigError("scenario.dt_sim must be positive")
        ratio = self.mpc.dt_mpc / s.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("mpc.dt_mpc must be an integer multiple of scenario.dt_sim")

    @property
    def substeps(self) -> int:
        return int(round(self.mpc.dt_mpc / self.scenario.dt_sim))

    def controller_config(self) -> MpcConfig:
        """MPC settings with the bounds and arrival targets filled in."""
        return replace(self.mpc, bounds=self.bounds, distance_target=self.scenario.distance_target,
                       t_final=self.scenario.t_final)

    def resolve(self, name: str) -> Path:
        """Locate a file named in the config: relative to the config, then bundled data."""
        p = Path(name)
        if p.is_absolute() and p.exists():
            return p
        for candidate in (self.base_dir / p, rf.data_path(p.name)):
            if candidate.exists():
                return Path(candidate)
        raise ConfigError(f"file not found: {name} (searched {self.base_dir} and bundled data)")


# special keys that do not map one-to-one onto a dataclass field
_SKIP = {("battery", "ocv_curve"), ("mpc", "bounds"), ("mpc", "distance_target"), ("mpc", "t_final")}


def _schema():
    out = {}
    for sec in fields(ScenarioConfig):
        if sec.name == "base_dir":
            continue
        for f in fields(sec.default):
            if (sec.name, f.name) not in _SKIP:
                out[f"{sec.name}.{f.name}"] = getattr(sec.default, f.name)
    out["battery.ocv_file"] = ""
    return out


SCHEMA = _schema()


def _coerce(key, raw: str, default):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [float(x) for x in text.split(",") if x.strip()]
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} values")
            return tuple(int(p) if isinstance(d, int) and not isinstance(d, bool) else p
                         for p, d in zip(parts, default))
        if default is None:
            return None if text.lower() in ("none", "") else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def parse_text(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name[len(ENV_PREFIX):]:
            continue
        section, key = name[len(ENV_PREFIX):].split("__", 1)
        dotted = f"{section.lower()}.{key.lower()}"
        if dotted not in SCHEMA:
            raise ConfigError(f"environment override {name} names unknown key {dotted!r}")
        out[dotted] = value
    return out


def build(values: dict, base_dir: Path = Path(".")) -> ScenarioConfig:
    """Assemble a :class:`ScenarioConfig` from raw string values."""
    grouped: dict[str, dict] = {}
    for key, raw in values.items():
        section, name = key.split(".", 1)
        grouped.setdefault(section, {})[name] = _coerce(key, raw, SCHEMA[key])
    kwargs = {}
    try:
        for sec in fields(ScenarioConfig):
            if sec.name == "base_dir":
                continue
            updates = dict(grouped.get(sec.name, {}))
            ocv_file = updates.pop("ocv_file", "") if sec.name == "battery" else ""
            obj = replace(sec.default, **updates) if updates else sec.default
            if ocv_file:
                path = Path(ocv_file)
                path = path if path.is_absolute() else base_dir / path
                obj = replace(obj, ocv_curve=OcvCurve.from_csv(path))
            kwargs[sec.name] = obj
        return ScenarioConfig(base_dir=base_dir, **kwargs)
    except ColdMpcError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    except (TypeError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path, environ=None) -> ScenarioConfig:
    """Read a config file (or a bundled config name) and apply env overrides."""
    p = Path(path)
    if not p.exists():
        bundled = rf.data_path(p.name if p.suffix else f"{p.name}.cfg")
        if not Path(bundled).exists():
            raise ConfigError(f"config file not found: {path}")
        p = Path(bundled)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    values = parse_text(text, str(p))
    values.update(env_overrides(environ))
    return build(values, p.parent)


def dumps(config: ScenarioConfig) -> str:
    """Serialise every key (the reference listing of the format)."""
    lines = []
    for sec in fields(ScenarioConfig):
        if sec.name == "base_dir":
            continue
        obj = getattr(config, sec.name)
        lines.append(f"# {sec.name}")
        for f in fields(obj):
            if (sec.name, f.name) in _SKIP:
                continue
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{sec.name}.{f.name} = {value}")
    return "\n".join(lines) + "\n"


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in Path(rf.data_path("")).glob("*.cfg"))


__all__ = ["ScenarioConfig", "ScenarioSettings", "InitialState", "RouteSpec", "load", "build", "parse_text",
           "env_overrides", "dumps", "bundled_configs", "SCHEMA"]

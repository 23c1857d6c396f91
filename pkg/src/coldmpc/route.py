"""Road-grade and ambient-temperature profiles.

Two kinds of profile exist:

* :class:`RouteProfile` is indexed by time and carries grade and ambient
  temperature. Synthetic scenarios and the MPC preview use it.
* :class:`DistanceProfile` is indexed by distance along the road and carries
  only grade (and elevation). Waypoint files produce it.

Grades are stored as rise over run (``tan`` of the slope angle). Lookups
interpolate linearly and clamp at both ends.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSegmentError, InvalidArgumentError, RouteError

EARTH_RADIUS = 6_371_000.0  # m, spherical Earth
GRADE_LIMIT = 1.0
AMBIENT_RANGE = (200.0, 330.0)

TIME_COLUMNS = ("t_s", "grade", "t_ambient_K")
WAYPOINT_COLUMNS = ("lat", "lon", "elevation_m")


@dataclass(frozen=True)
class RouteSample:
    t: float
    grade: float
    t_ambient: float

    @property
    def theta(self) -> float:
        """Slope angle in radians."""
        return math.atan(self.grade)


@dataclass(frozen=True)
class Waypoint:
    lat: float
    lon: float
    elevation: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidArgumentError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidArgumentError(f"longitude {self.lon} outside [-180, 180]")
        if not math.isfinite(self.elevation):
            raise InvalidArgumentError("elevation must be finite")


def _check_grade(grade):
    if not np.all(np.isfinite(grade)):
        raise RouteError("grade contains non-finite values")
    worst = float(np.max(np.abs(grade))) if grade.size else 0.0
    if worst > GRADE_LIMIT:
        raise RouteError(f"|grade| = {worst:.4g} exceeds {GRADE_LIMIT}")


class RouteProfile:
    """Time-indexed grade and ambient temperature.

    Parameters
    ----------
    t, grade, t_ambient : array_like
        Sample times [s], grades [-] and ambient temperatures [K]. Times must
        be strictly increasing.
    """

    def __init__(self, t, grade, t_ambient):
        self.t = np.asarray(t, dtype=float)
        self.grade = np.asarray(grade, dtype=float)
        self.t_ambient = np.asarray(t_ambient, dtype=float)
        if not (self.t.shape == self.grade.shape == self.t_ambient.shape) or self.t.ndim != 1:
            raise RouteError("t, grade and t_ambient must be 1-D arrays of equal length")
        if self.t.size == 0:
            raise RouteError("a route profile needs at least one sample")
        if np.any(np.diff(self.t) <= 0):
            raise RouteError("sample times must be strictly increasing")
        _check_grade(self.grade)
        lo, hi = AMBIENT_RANGE
        if np.any(~np.isfinite(self.t_ambient)) or np.any((self.t_ambient < lo) | (self.t_ambient > hi)):
            raise RouteError(f"ambient temperature outside [{lo}, {hi}] K")
        for arr in (self.t, self.grade, self.t_ambient):
            arr.setflags(write=False)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    @property
    def samples(self) -> list[RouteSample]:
        return [RouteSample(*row) for row in zip(self.t.tolist(), self.grade.tolist(), self.t_ambient.tolist())]

    def __len__(self):
        return self.t.size

    def grade_at(self, t):
        return np.interp(t, self.t, self.grade)

    def theta_at(self, t):
        return np.arctan(self.grade_at(t))

    def ambient_at(self, t):
        return np.interp(t, self.t, self.t_ambient)

    def at(self, t: float) -> RouteSample:
        return RouteSample(float(t), float(self.grade_at(t)), float(self.ambient_at(t)))


class DistanceProfile:
    """Distance-indexed grade, as produced by :func:`ingest_waypoints`.

    ``grade[i]`` is the grade of the segment starting at ``distance[i]``;
    the last sample repeats the grade of the final segment so that the
    profile spans the whole route.
    """

    def __init__(self, distance, grade, elevation=None):
        self.distance = np.asarray(distance, dtype=float)
        self.grade = np.asarray(grade, dtype=float)
        if self.distance.shape != self.grade.shape or self.distance.ndim != 1 or self.distance.size < 2:
            raise RouteError("distance and grade must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(self.distance) <= 0):
            raise RouteError("distances must be strictly increasing")
        _check_grade(self.grade)
        self.elevation = None if elevation is None else np.asarray(elevation, dtype=float)

    @property
    def length(self) -> float:
        return float(self.distance[-1])

    def grade_at(self, d):
        return np.interp(d, self.distance, self.grade)

    def theta_at(self, d):
        return np.arctan(self.grade_at(d))


def generate_sinusoidal(grade_amp, grade_period, temp_mean, temp_amp, temp_period, duration, dt) -> RouteProfile:
    """Sinusoidal grade and ambient profile sampled every ``dt`` seconds."""
    for name, value in (("grade_period", grade_period), ("temp_period", temp_period), ("duration", duration), ("dt", dt)):
        if not value > 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value}")
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    t[-1] = duration
    grade = grade_amp * np.sin(2 * np.pi * t / grade_period)
    t_amb = temp_mean + temp_amp * np.sin(2 * np.pi * t / temp_period)
    return RouteProfile(t, grade, t_amb)


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance [m] between two points given in degrees."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def moving_average(values, window: int):
    """Centred moving average; the window shrinks symmetrically at the ends."""
    if window < 1 or window % 2 == 0:
        raise InvalidArgumentError(f"smoothing window must be a positive odd count, got {window}")
    values = np.asarray(values, dtype=float)
    if window == 1:
        return values.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(values.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, values.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def ingest_waypoints(points: Sequence[Waypoint], smoothing_window: int = 1) -> DistanceProfile:
    """Convert a waypoint list into a distance-indexed grade profile."""
    if len(points) < 2:
        raise InvalidArgumentError("at least two waypoints are required")
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    elev = np.array([p.elevation for p in points])
    run = haversine(lat[:-1], lon[:-1], lat[1:], lon[1:])
    flat = np.flatnonzero(run <= 0.0)
    if flat.size:
        raise DegenerateSegmentError(int(flat[0]))
    seg_grade = moving_average(np.diff(elev) / run, smoothing_window)
    distance = np.concatenate([[0.0], np.cumsum(run)])
    grade = np.concatenate([seg_grade, seg_grade[-1:]])
    return DistanceProfile(distance, grade, elev)


def resample_to_time(profile: DistanceProfile, speed_assumption: float,
                     t_ambient: float | Callable[[np.ndarray], np.ndarray] = 273.15) -> RouteProfile:
    """Re-index a distance profile by time at a constant assumed speed.

    ``t_ambient`` is either a constant or a function of time, since distance
    profiles carry no temperature.
    """
    if not speed_assumption > 0:
        raise InvalidArgumentError(f"speed assumption must be positive, got {speed_assumption}")
    t = profile.distance / speed_assumption
    amb = t_ambient(t) if callable(t_ambient) else np.full_like(t, float(t_ambient))
    return RouteProfile(t, profile.grade, amb)


def read_route_csv(path) -> RouteProfile | list[Waypoint]:
    """Read a route file; the header decides between time samples and waypoints."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise RouteError(f"cannot read route file {path}: {exc}") from exc
    if not rows:
        raise RouteError(f"route file {path} is empty")
    header = tuple(c.strip() for c in rows[0])
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise RouteError(f"malformed numeric row in {path}: {exc}") from exc
    if header[:3] == TIME_COLUMNS:
        return RouteProfile(data[:, 0], data[:, 1], data[:, 2])
    if header[:3] == WAYPOINT_COLUMNS:
        return [Waypoint(*row[:3]) for row in data.tolist()]
    raise RouteError(f"unrecognised route header {header!r} in {path}")


def write_route_csv(profile: RouteProfile, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TIME_COLUMNS) + "\n")
        for t, g, a in zip(profile.t, profile.grade, profile.t_ambient):
            fh.write(f"{t:.10g},{g:.10g},{a:.10g}\n")

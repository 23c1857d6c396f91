import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldmpc import route
from coldmpc.errors import DegenerateSegmentError, InvalidArgumentError, RouteError
from coldmpc.refrigerant import data_path
from coldmpc.route import Waypoint


def _haversine_oracle(a, b):
    # independent scalar implementation with the math module
    r = 6_371_000.0
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp, dl = p2 - p1, math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(h))


def _north(lat0, metres):
    return lat0 + math.degrees(metres / route.EARTH_RADIUS)


def test_sinusoid_ranges():
    prof = route.generate_sinusoidal(0.2, 200, 273, 5, 300, 600, 1)
    assert len(prof) == 601 and prof.duration == 600
    assert prof.grade.max() == pytest.approx(0.2) and prof.grade.min() == pytest.approx(-0.2)
    assert prof.t_ambient.max() == pytest.approx(278) and prof.t_ambient.min() == pytest.approx(268)


def test_sinusoid_zero_amplitude_is_constant():
    prof = route.generate_sinusoidal(0.0, 123, 273, 0.0, 77, 600, 1)
    assert np.all(prof.grade == 0.0)
    assert np.all(prof.t_ambient == 273.0)


def test_sinusoid_peak_at_quarter_period():
    prof = route.generate_sinusoidal(0.2, 200, 273, 5, 300, 600, 1)
    assert prof.grade_at(50.0) == 0.2


@pytest.mark.parametrize("bad", [dict(grade_period=0), dict(temp_period=-1), dict(duration=0), dict(dt=0)])
def test_sinusoid_rejects_non_positive(bad):
    args = dict(grade_amp=0.2, grade_period=200, temp_mean=273, temp_amp=5, temp_period=300, duration=600, dt=1)
    args.update(bad)
    with pytest.raises(InvalidArgumentError):
        route.generate_sinusoidal(**args)


def test_lookup_exact_at_samples_and_linear_between():
    prof = route.RouteProfile([0, 10, 20], [0.0, 0.1, -0.1], [270, 280, 260])
    assert prof.grade_at(10) == 0.1
    assert prof.grade_at(5) == pytest.approx(0.05)
    assert prof.ambient_at(15) == pytest.approx(270.0)
    # clamped at both ends
    assert prof.grade_at(-5) == 0.0 and prof.grade_at(99) == -0.1
    assert prof.at(99).t_ambient == 260


def test_profile_validation():
    with pytest.raises(RouteError):
        route.RouteProfile([0, 0], [0, 0], [270, 270])
    with pytest.raises(RouteError):
        route.RouteProfile([0, 1], [0, 1.5], [270, 270])
    with pytest.raises(RouteError):
        route.RouteProfile([0, 1], [0, 0], [270, 400])


def test_grade_of_two_points():
    a = Waypoint(44.0, -73.0, 100.0)
    b = Waypoint(_north(44.0, 100.0), -73.0, 110.0)
    prof = route.ingest_waypoints([a, b])
    assert prof.grade[0] == pytest.approx(0.10, rel=1e-9)
    assert prof.length == pytest.approx(100.0, rel=1e-9)


def test_identical_coordinates_are_degenerate():
    pts = [Waypoint(44, -73, 0), Waypoint(44.001, -73, 1), Waypoint(44.001, -73, 2)]
    with pytest.raises(DegenerateSegmentError) as info:
        route.ingest_waypoints(pts)
    assert info.value.index == 1


def test_too_few_waypoints():
    with pytest.raises(InvalidArgumentError):
        route.ingest_waypoints([Waypoint(0, 0, 0)])


def test_flat_collinear_route():
    pts = [Waypoint(_north(10.0, d), 20.0, 55.0) for d in (0, 40, 90)]
    assert np.all(route.ingest_waypoints(pts).grade == 0.0)


def test_sawtooth_grades_match_direct_ratio():
    rng = np.random.default_rng(3)
    lat = 44.0 + np.cumsum(rng.uniform(1e-4, 5e-4, 30))
    lon = -73.0 + np.cumsum(rng.uniform(-3e-4, 3e-4, 30))
    elev = np.where(np.arange(30) % 2, 5.0, 0.0)
    pts = [Waypoint(*p) for p in zip(lat, lon, elev)]
    prof = route.ingest_waypoints(pts, smoothing_window=1)
    expected = [(b.elevation - a.elevation) / _haversine_oracle(a, b) for a, b in zip(pts, pts[1:])]
    assert np.max(np.abs(prof.grade[:-1] - expected)) < 1e-12


def test_smoothing():
    vals = np.array([0.0, 3.0, 0.0, 3.0, 0.0])
    assert np.array_equal(route.moving_average(vals, 1), vals)
    assert route.moving_average(vals, 3)[2] == pytest.approx(2.0)
    with pytest.raises(InvalidArgumentError):
        route.moving_average(vals, 2)


def test_resample_to_time():
    prof = route.DistanceProfile([0.0, 500.0, 1000.0], [0.0, 0.1, 0.1])
    assert route.resample_to_time(prof, 10.0).duration == pytest.approx(100.0)
    spaced = route.DistanceProfile(np.arange(5) * 29.0576, np.zeros(5))
    assert np.allclose(np.diff(route.resample_to_time(spaced, 29.0576).t), 1.0)
    timed = route.resample_to_time(prof, 10.0)
    assert timed.grade_at(1e6) == 0.1
    with pytest.raises(InvalidArgumentError):
        route.resample_to_time(prof, 0.0)


def test_waypoint_validation():
    with pytest.raises(InvalidArgumentError):
        Waypoint(91, 0, 0)
    with pytest.raises(InvalidArgumentError):
        Waypoint(0, -181, 0)
    with pytest.raises(InvalidArgumentError):
        Waypoint(0, 0, math.nan)


def test_route_csv_round_trip(tmp_path):
    prof = route.generate_sinusoidal(0.1, 100, 270, 3, 50, 20, 0.5)
    path = tmp_path / "r.csv"
    route.write_route_csv(prof, path)
    back = route.read_route_csv(path)
    assert isinstance(back, route.RouteProfile)
    assert np.allclose(back.grade, prof.grade, rtol=1e-9, atol=1e-12)
    assert np.allclose(back.t_ambient, prof.t_ambient, rtol=1e-9)


def test_route_csv_header_detection(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("lat,lon,elevation_m\n44,-73,10\n44.001,-73,12\n")
    pts = route.read_route_csv(p)
    assert isinstance(pts, list) and pts[1].elevation == 12
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(RouteError):
        route.read_route_csv(bad)


def test_bundled_case2_route_extremes():
    pts = route.read_route_csv(data_path("case_study_2_waypoints.csv"))
    prof = route.ingest_waypoints(pts, 1)
    assert prof.grade.min() == pytest.approx(-0.6285, abs=1e-6)
    assert prof.grade.max() == pytest.approx(0.3923, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=20), st.floats(0, 1))
def test_lookup_stays_within_neighbouring_samples(grades, frac):
    t = np.arange(len(grades), dtype=float)
    prof = route.RouteProfile(t, grades, np.full(len(grades), 270.0))
    q = frac * t[-1]
    k = min(int(q), len(grades) - 2)
    lo, hi = sorted((grades[k], grades[k + 1]))
    assert lo - 1e-12 <= prof.grade_at(q) <= hi + 1e-12

"""Regenerate the synthetic Case Study 2 waypoint file.

The route runs west from Keene towards Lake Placid, NY, with waypoints
every ~30 m. Elevations are built segment by segment so that ingesting
the file (haversine run, no smoothing) reproduces the designed grades:

* a short level lead-in;
* a long descent at -0.24 containing one -0.6285 segment;
* a net climb with rolling hills containing one +0.3923 segment.

    python tools/make_case2_route.py [--mean-climb 0.052]
"""

import argparse
import math
from pathlib import Path

import numpy as np

from coldmpc.route import haversine

OUT = Path(__file__).resolve().parents[1] / "src" / "coldmpc" / "data" / "case_study_2_waypoints.csv"

START = (44.2562, -73.7912)  # Keene, NY
BEARING = math.radians(285.0)
SPACING = 30.0  # m
LENGTH = 18600.0  # m
EARTH_R = 6_371_000.0
START_ELEVATION = 750.0  # m

LEAD_IN = 150.0
DESCENT_END = 1650.0
RAMP_END = 1800.0
DESCENT_GRADE = -0.24
DOWN_SPIKE_AT = 1050.0
DOWN_SPIKE = -0.6285
UP_SPIKE_AT = 10020.0
UP_SPIKE = 0.3923


def segment_grades(mid, mean_climb, hill_amp, hill_period):
    g = np.zeros_like(mid)
    desc = (mid >= LEAD_IN) & (mid < DESCENT_END)
    g[desc] = DESCENT_GRADE
    ramp = (mid >= DESCENT_END) & (mid < RAMP_END)
    g[ramp] = DESCENT_GRADE * (RAMP_END - mid[ramp]) / (RAMP_END - DESCENT_END)
    climb = mid >= RAMP_END
    g[climb] = mean_climb + hill_amp * np.sin(2 * np.pi * (mid[climb] - RAMP_END) / hill_period)
    g[np.argmin(np.abs(mid - DOWN_SPIKE_AT))] = DOWN_SPIKE
    g[np.argmin(np.abs(mid - UP_SPIKE_AT))] = UP_SPIKE
    return g


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mean-climb", type=float, default=0.052)
    ap.add_argument("--hill-amplitude", type=float, default=0.04)
    ap.add_argument("--hill-period", type=float, default=1500.0)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args(argv)

    n = int(LENGTH / SPACING) + 1
    s = np.arange(n) * SPACING
    # destination points along a great circle from START
    lat0, lon0 = map(math.radians, START)
    delta = s / EARTH_R
    lat = np.arcsin(np.sin(lat0) * np.cos(delta) + np.cos(lat0) * np.sin(delta) * np.cos(BEARING))
    lon = lon0 + np.arctan2(np.sin(BEARING) * np.sin(delta) * np.cos(lat0), np.cos(delta) - np.sin(lat0) * np.sin(lat))
    lat = np.round(np.degrees(lat), 7)
    lon = np.round(np.degrees(lon), 7)
    run = haversine(lat[:-1], lon[:-1], lat[1:], lon[1:])
    mid = np.cumsum(run) - 0.5 * run
    grades = segment_grades(mid, args.mean_climb, args.hill_amplitude, args.hill_period)
    elev = START_ELEVATION + np.concatenate([[0.0], np.cumsum(grades * run)])
    with open(args.out, "w") as fh:
        fh.write("# synthetic Keene -> Lake Placid, NY profile; regenerate with tools/make_case2_route.py\n")
        fh.write("lat,lon,elevation_m\n")
        for a, b, e in zip(lat, lon, elev):
            fh.write(f"{a:.7f},{b:.7f},{e:.6f}\n")
    print(f"wrote {n} waypoints, {s[-1] / 1000:.1f} km, net rise {elev[-1] - elev[0]:.0f} m -> {args.out}")


if __name__ == "__main__":
    main()

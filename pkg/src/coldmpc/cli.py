"""Command-line interface.

    coldmpc simulate --config case_study_1 [--out DIR]
    coldmpc generate-route --synthetic grade_amp=0.2,duration=600 --out route.csv
    coldmpc fit-refrigerant --table r134a_saturation.csv --out fit.txt
    coldmpc batch --configs DIR [--out DIR] [--jobs N]

Exit status is 0 on success, 2 on usage errors and the category code of
:data:`coldmpc.errors.EXIT_CODES` otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import config as cfgmod
from . import harness
from . import refrigerant as rf
from . import route
from .errors import ColdMpcError, ConfigError, InvalidArgumentError, OutputError

log = logging.getLogger("coldmpc")

SYNTHETIC_DEFAULTS = dict(grade_amp=0.2, grade_period=200.0, temp_mean=273.0, temp_amp=5.0, temp_period=300.0,
                          duration=600.0, dt=1.0)


def _parse_synthetic(text: str) -> dict:
    params = dict(SYNTHETIC_DEFAULTS)
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise InvalidArgumentError(f"--synthetic expects key=value pairs, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in params:
            raise InvalidArgumentError(f"unknown synthetic route parameter {key!r}; known: {', '.join(params)}")
        try:
            params[key] = float(value)
        except ValueError:
            raise InvalidArgumentError(f"synthetic parameter {key} must be numeric, got {value!r}") from None
    return params


def _load_config(args) -> cfgmod.ScenarioConfig:
    cfg = cfgmod.load(args.config)
    if getattr(args, "route", None):
        data = route.read_route_csv(args.route)
        kind = "csv" if isinstance(data, route.RouteProfile) else "waypoints"
        cfg = replace(cfg, route=replace(cfg.route, kind=kind, file=str(Path(args.route).resolve())))
    return cfg


def _simulate_one(path, out_dir, until=None, figures=True) -> dict:
    cfg = cfgmod.load(path)
    trace, summary = harness.run(cfg, until=until)
    paths = harness.emit_outputs(trace, summary, out_dir, cfg.scenario.dt_sim, figures)
    return {"config": str(path), "out": str(out_dir), "status": summary.status,
            "final_distance": summary.final_distance, "final_soc": summary.final_soc,
            "final_t_batt": summary.final_t_batt, "files": sorted(p.name for p in paths.values())}


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg.scenario.output_dir)
    trace, summary = harness.run(cfg, until=args.until)
    harness.emit_outputs(trace, summary, out, cfg.scenario.dt_sim, not args.no_figures)
    print(json.dumps({k: v for k, v in asdict(summary).items() if k != "solver"}, indent=2))
    print(f"outputs written to {out}")
    return 0 if summary.status == "completed" else 6


def cmd_generate_route(args) -> int:
    if args.route:
        points = route.read_route_csv(args.route)
        if isinstance(points, route.RouteProfile):
            raise InvalidArgumentError("--route must be a waypoint file (lat,lon,elevation_m)")
        prof = route.ingest_waypoints(points, args.smoothing_window)
        result = route.resample_to_time(prof, args.speed, args.t_ambient)
    else:
        p = _parse_synthetic(args.synthetic or "")
        result = route.generate_sinusoidal(p["grade_amp"], p["grade_period"], p["temp_mean"], p["temp_amp"],
                                           p["temp_period"], p["duration"], p["dt"])
    try:
        route.write_route_csv(result, args.out)
    except OSError as exc:
        raise OutputError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {len(result)} samples ({result.duration:g} s) to {args.out}")
    return 0


def cmd_fit_refrigerant(args) -> int:
    sat = rf.read_saturation_table(args.table)
    sup = rf.read_superheat_table(args.superheat)
    fit = rf.fit_properties(sat, sup)
    try:
        rf.save_fit(fit, args.out)
    except OSError as exc:
        raise OutputError(f"cannot write {args.out}: {exc}") from exc
    report = rf.conformance_report(fit, sat, sup)
    for name, err in report.items():
        print(f"{name:>14s}  max relative error {100 * err:.4f} %")
    print(f"fit written to {args.out}")
    return 0


def cmd_batch(args) -> int:
    cfg_dir = Path(args.configs)
    if not cfg_dir.is_dir():
        raise ConfigError(f"--configs must be a directory: {cfg_dir}")
    files = sorted(cfg_dir.glob("*.cfg"))
    if not files:
        raise ConfigError(f"no *.cfg files in {cfg_dir}")
    out_root = Path(args.out)
    jobs = args.jobs or min(len(files), os.cpu_count() or 1)
    results, failed = [], 0
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {f: pool.submit(_simulate_one, f, out_root / f.stem, args.until) for f in files}
        for f, fut in futures.items():
            try:
                results.append(fut.result())
            except ColdMpcError as exc:
                failed += 1
                results.append({"config": str(f), "status": "error", "error": f"{type(exc).__name__}: {exc}"})
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "batch_summary.json").write_text(json.dumps(results, indent=2) + "\n")
    for r in results:
        print(f"{Path(r['config']).stem:>24s}  {r['status']}")
    return 0 if failed == 0 and all(r["status"] == "completed" for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coldmpc", description="Cold-weather EV energy management by MPC.")
    ap.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--config", required=True, help="config file or bundled name (case_study_1, case_study_2)")
    p.add_argument("--out", help="output directory (default: scenario.output_dir)")
    p.add_argument("--route", help="route file overriding the configured route")
    p.add_argument("--until", type=float, help="stop after this many seconds")
    p.add_argument("--no-figures", action="store_true", help="skip the figure CSV files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate-route", help="write a time-indexed route CSV")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--synthetic", help="sinusoid parameters as key=value,... "
                                         f"(keys: {', '.join(SYNTHETIC_DEFAULTS)})")
    src.add_argument("--route", help="waypoint file to ingest and resample")
    p.add_argument("--speed", type=float, default=29.0576, help="preview speed for --route [m/s]")
    p.add_argument("--t-ambient", type=float, default=273.15, help="ambient for --route [K]")
    p.add_argument("--smoothing-window", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_route)

    p = sub.add_parser("fit-refrigerant", help="fit property correlations to reference tables")
    p.add_argument("--table", default=None, help="saturation table CSV (default: bundled R134a)")
    p.add_argument("--superheat", default=None, help="superheat table CSV (default: bundled R134a)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_refrigerant)

    p = sub.add_parser("batch", help="run every *.cfg in a directory in parallel")
    p.add_argument("--configs", required=True)
    p.add_argument("--out", default="batch_out")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--until", type=float, help="stop each run after this many seconds")
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ColdMpcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())

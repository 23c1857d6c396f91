"""Run both bundled case studies and narrate what the controller did.

The first trip follows a sinusoidal grade; the controller rides the speed
band to bank energy on the hills and starts preheating the battery once
the arrival window comes into view. The second trip starts with a long
descent, so the battery charges before the climb drains it again.

    python3 demos/case_study_tour.py [--until SECONDS]
"""

import argparse

import numpy as np

from coldmpc import config, harness


def _secs(value):
    return "never" if value is None else f"{value:.1f} s"


def describe(name, until):
    cfg = config.load(name)
    trace, summary = harness.run(cfg, until=until)
    t = trace.column("t")
    soc = trace.column("soc")
    peak = int(np.argmax(soc))
    print(f"== {name} ({len(trace)} steps of {cfg.scenario.dt_sim} s)")
    print(f"distance        {summary.final_distance / 1000:8.2f} km (target {cfg.scenario.distance_target / 1000:.2f})")
    print(f"soc             {soc[0]:.3f} -> peak {soc[peak]:.3f} at {t[peak]:.0f} s -> {summary.final_soc:.3f}")
    print(f"battery temp    {trace.column('t_batt')[0]:.1f} K -> {summary.final_t_batt:.2f} K, "
          f"in window from {_secs(summary.battery_settle_time)}")
    print(f"cabin settled   {_secs(summary.cabin_settle_time)}")
    for label, joules in (("propulsion", summary.energy_propulsion), ("heat pump", summary.energy_hvac),
                          ("heater", summary.energy_heater)):
        print(f"energy {label:<10s} {joules / 3.6e6:8.3f} kWh")
    print(f"solver          {summary.solver['status_counts']}")
    print()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--until", type=float, default=None)
    args = ap.parse_args()
    for name in config.bundled_configs():
        describe(name, args.until)


if __name__ == "__main__":
    main()

"""Tabulate the heat-pump cycle against compressor speed.

For a few outdoor temperatures the script sweeps the compressor speed up
to the high-pressure cap and prints supply-air temperature, battery-side
power and COP. It shows why the controller prefers moderate cabin
setpoints: power climbs faster than delivered heat.

    python3 demos/heat_pump_map.py
"""

import numpy as np

from coldmpc import refrigerant as rf
from coldmpc.cabin import CabinParams


def main():
    fit = rf.default_fit()
    comp, cabin = rf.CompressorParams(), CabinParams()
    t_return = 285.0
    for t_amb in (258.15, 268.15, 278.15):
        cap = rf.max_compressor_speed(fit, comp, cabin, t_amb, t_return)
        print(f"ambient {t_amb:.2f} K, return air {t_return} K, speed cap {cap:.0f} rpm")
        print(f"{'rpm':>8s} {'supply K':>9s} {'power W':>9s} {'COP':>6s}")
        for omega in np.linspace(0.2, 1.0, 5) * cap:
            res = rf.solve_cycle(fit, comp, cabin, omega, t_amb, t_return)
            print(f"{omega:8.0f} {res.t_air_in:9.2f} {res.p_battery:9.1f} {res.cop:6.2f}")
        print()


if __name__ == "__main__":
    main()

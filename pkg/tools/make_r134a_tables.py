"""Regenerate the bundled R134a reference tables.

Needs CoolProp, which is *not* a runtime dependency of coldmpc; the tables it
writes are committed under ``src/coldmpc/data`` and serve as the conformance
oracle for the property fits.

    python tools/make_r134a_tables.py
"""

from pathlib import Path

import numpy as np
import CoolProp.CoolProp as CP

DATA = Path(__file__).resolve().parents[1] / "src" / "coldmpc" / "data"
FLUID = "R134a"


def prop(name, *args):
    return CP.PropsSI(name, *args, FLUID)


def saturation_table(path):
    temps = np.arange(233.15, 343.15 + 1e-9, 5.0)
    with open(path, "w") as fh:
        fh.write("T_K,p_kPa,h_f,h_g,s_g,rho_g,rho_f\n")
        for t in temps:
            row = (
                t,
                prop("P", "T", t, "Q", 0) / 1e3,
                prop("H", "T", t, "Q", 0) / 1e3,
                prop("H", "T", t, "Q", 1) / 1e3,
                prop("S", "T", t, "Q", 1) / 1e3,
                prop("D", "T", t, "Q", 1),
                prop("D", "T", t, "Q", 0),
            )
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def superheat_table(path):
    # isentropic compression from saturated vapour at T1 to the saturation
    # pressure of T3, the only region the heat-pump cycle visits
    t1_grid = np.arange(238.15, 283.15 + 1e-9, 5.0)
    t3_grid = np.arange(283.15, 343.15 + 1e-9, 5.0)
    with open(path, "w") as fh:
        fh.write("p_kPa,s,h,T1_K,T3_K\n")
        for t1 in t1_grid:
            s1 = prop("S", "T", t1, "Q", 1)
            for t3 in t3_grid:
                if t3 <= t1:
                    continue
                p2 = prop("P", "T", t3, "Q", 1)
                h2 = prop("H", "P", p2, "S", s1)
                fh.write(f"{p2 / 1e3:.6f},{s1 / 1e3:.6f},{h2 / 1e3:.6f},{t1:.2f},{t3:.2f}\n")


if __name__ == "__main__":
    saturation_table(DATA / "r134a_saturation.csv")
    superheat_table(DATA / "r134a_superheat.csv")

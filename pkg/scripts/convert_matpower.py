#!/usr/bin/env python3
"""Convert a PYPOWER/MATPOWER-style case into the vcpi JSON case format.

The input is a Python file defining a function that returns a ``ppc`` dict
(PYPOWER layout, e.g. ``pypower/case39.py``).  Off-nominal transformer taps
and line charging are folded into pi-equivalents: branch admittance ``y/a``
plus bus shunts, so the resulting network has no tap elements.  Generator
buses listed with ``--as-load`` are written as PQ buses with their solved
net injection.

    python scripts/convert_matpower.py case39.py --as-load 37 -o src/vcpi/data/ne39.json
"""

import argparse
import importlib.util
import json
from collections import defaultdict

import numpy as np


def load_ppc(path, func=None):
    spec = importlib.util.spec_from_file_location("ppc_case", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    func = func or [k for k in dir(mod) if k.startswith("case")][0]
    return getattr(mod, func)()


def convert(ppc, as_load=()):
    base = float(ppc["baseMVA"])
    bus, gen, branch = (np.asarray(ppc[k], dtype=float) for k in ("bus", "gen", "branch"))
    shunt = defaultdict(complex)
    for row in bus:
        shunt[int(row[0])] += complex(row[4], row[5]) / base

    out_branches = []
    for row in branch:
        if len(row) > 10 and row[10] == 0:
            continue
        f, t = int(row[0]), int(row[1])
        r, x, bc, tap, shift = row[2], row[3], row[4], row[8], row[9]
        if shift:
            raise ValueError(f"phase shifter on branch {f}-{t} is not supported")
        a = tap if tap else 1.0
        y = 1.0 / complex(r, x)
        # Y_ff = (y + j bc/2) / a^2, Y_tt = y + j bc/2, Y_ft = -y / a
        shunt[f] += (y * (1 - a) / a + 1j * bc / 2) / a
        shunt[t] += y * (a - 1) / a + 1j * bc / 2
        ys = y / a
        out_branches.append({"from": f, "to": t, "g": ys.real, "b": ys.imag})

    gens = defaultdict(lambda: [0.0, 0.0, None, 0.0])
    for row in gen:
        if len(row) > 7 and row[7] <= 0:
            continue
        g = gens[int(row[0])]
        g[0] += row[1]
        g[1] += row[2]
        g[2] = row[5]
        g[3] += row[3]

    out_buses = []
    for row in bus:
        bid = int(row[0])
        pd, qd = row[2], row[3]
        rec = {"id": bid}
        if bid in gens and bid not in as_load:
            pg, qg, vg, qmax = gens[bid]
            rec.update(kind="generator", p=(pg - pd) / base, q=(qg - qd) / base,
                       v_set=vg, q_max=(qmax - qd) / base)
        else:
            pg, qg = gens[bid][:2] if bid in gens else (0.0, 0.0)
            rec.update(kind="load", p=(pg - pd) / base, q=(qg - qd) / base)
        sh = shunt[bid]
        if abs(sh) > 0:
            rec["shunt_g"] = sh.real
            rec["shunt_b"] = sh.imag
        out_buses.append(rec)
    return {"base_mva": base, "buses": out_buses, "branches": out_branches}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("case", help="python file with a ppc-returning function")
    ap.add_argument("--func", default=None)
    ap.add_argument("--as-load", type=int, nargs="*", default=[])
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()
    data = convert(load_ppc(args.case, args.func), set(args.as_load))
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()

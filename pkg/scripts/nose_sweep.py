#!/usr/bin/env python3
"""Indices along a uniform loading ramp up to the last solvable point.

    python scripts/nose_sweep.py [--case ne39] [--step 0.02] [--csv out.csv]

Each row holds the loading factor, the smallest load voltage, the worst
bus and value of every index and the smallest nonzero real part of the
reduced Jacobian spectrum.  The indices blow up as that value nears zero.
"""

import argparse
import csv
import sys

from vcpi.grid import bundled_case, load_case
from vcpi.oracle import CollapseError, IndexKind, compute_index, worst_case
from vcpi.powerflow import PowerFlowError, assemble_jacobian, check_spectral_condition, solve_power_flow


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", default="ne39")
    ap.add_argument("--reference", type=int)
    ap.add_argument("--step", type=float, default=0.02)
    ap.add_argument("--max-factor", type=float, default=4.0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    net = load_case(bundled_case(args.case))
    ref = args.reference if args.reference is not None else (31 if args.case == "ne39" else None)
    rows, init, f = [], None, 1.0
    while f <= args.max_factor:
        case = net.with_injections(net.p_spec * f, net.q_spec * f)
        try:
            pt = solve_power_flow(case, ref, init)
            blk = assemble_jacobian(case, pt)
            rep = check_spectral_condition(blk, pt.v_load)
            row = {"factor": round(f, 4), "v_min": float(pt.v_load.min()),
                   "min_re": rep.reduced.min_nonzero_real}
            for k in IndexKind:
                bus, val = worst_case(compute_index(k, blk, pt))
                row[f"{k.value}_bus"], row[k.value] = bus, val
        except (PowerFlowError, CollapseError) as exc:
            print(f"no solution at factor {f:.3f}: {exc}", file=sys.stderr)
            break
        rows.append(row)
        init = pt.snapshot
        f += args.step

    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    wr = csv.DictWriter(out, fieldnames=list(rows[0]))
    wr.writeheader()
    wr.writerows(rows)


if __name__ == "__main__":
    main()

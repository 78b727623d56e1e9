#!/usr/bin/env python3
"""Predicted vs observed Euler step limit for each index on a bundled case.

    python scripts/euler_bound_sweep.py [--case ne39] [--tau 10]
"""

import argparse

import numpy as np

from vcpi.agents import dense_system, empirical_onset, euler_stability_bound
from vcpi.grid import bundled_case, load_case
from vcpi.oracle import IndexKind
from vcpi.powerflow import solve_power_flow


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", default="ne39")
    ap.add_argument("--reference", type=int, default=None)
    ap.add_argument("--tau", type=float, default=10.0)
    args = ap.parse_args()

    net = load_case(bundled_case(args.case))
    ref = args.reference if args.reference is not None else (31 if args.case == "ne39" else None)
    pt = solve_power_flow(net, ref)
    s = pt.snapshot
    print(f"{'kind':>7} {'bound (s)':>11} {'onset (s)':>11} {'ratio':>8}  slowest |lambda|")
    for kind in IndexKind:
        A, _ = dense_system(kind, net, s.theta, s.v_mag, pt.p, pt.q)
        eigs = np.linalg.eigvals(A)
        bound = euler_stability_bound(eigs, args.tau)
        onset = empirical_onset(A, args.tau, 0.5 * bound, 2 * bound)
        print(f"{kind.value:>7} {bound:11.6f} {onset:11.6f} {onset / bound:8.5f}  "
              f"{np.abs(eigs).max():.1f}")


if __name__ == "__main__":
    main()

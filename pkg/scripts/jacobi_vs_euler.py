#!/usr/bin/env python3
"""How far the Jacobi fixed point sits from the Euler limit as losses grow.

Scales every branch and shunt conductance of a case by ``s`` (``s = 0`` is lossless)
and prints the max gap between the two schemes for each index.  The gap
scales with the network losses and vanishes without them.

    python scripts/jacobi_vs_euler.py [--case ne39]
"""

import argparse
from dataclasses import replace

import numpy as np

from vcpi.agents import AgentNetwork, Scheme, dense_system, jacobi_spectral_radius
from vcpi.grid import bundled_case, load_case
from vcpi.oracle import IndexKind, compute_index
from vcpi.powerflow import assemble_jacobian, solve_power_flow


def jacobi_limit(net, pt, kind, sweeps=4000):
    agents = AgentNetwork(net, kind)
    s = pt.snapshot
    for _ in range(sweeps):
        agents.step_vector(s.theta, s.v_mag, pt.p, pt.q, 0.0, Scheme.JACOBI)
    return agents.load_estimates()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", default="ne39")
    ap.add_argument("--scales", default="0,0.25,0.5,1,2")
    args = ap.parse_args()

    base = load_case(bundled_case(args.case))
    ref = 31 if args.case == "ne39" else None
    print(f"{'g scale':>7} {'losses':>9} " + " ".join(f"{k.value:>10}" for k in IndexKind) + "  rho")
    np.seterr(all="ignore")  # a diverging Jacobi run (rho >= 1) shows up as nan
    for s in map(float, args.scales.split(",")):
        branches = [replace(b, admittance=complex(s * b.admittance.real, b.admittance.imag))
                    for b in base.branches]
        buses = [replace(b, shunt_admittance=complex(s * b.shunt_admittance.real,
                                                     b.shunt_admittance.imag)) for b in base.buses]
        net = type(base)(tuple(buses), tuple(branches), base.base_mva)
        pt = solve_power_flow(net, ref)
        blk = assemble_jacobian(net, pt)
        gaps, rho = [], 0.0
        for kind in IndexKind:
            # the Euler limit equals the centralized index exactly
            gaps.append(np.abs(jacobi_limit(net, pt, kind) - compute_index(kind, blk, pt).values).max())
            A, _ = dense_system(kind, net, pt.snapshot.theta, pt.snapshot.v_mag, pt.p, pt.q)
            rho = max(rho, jacobi_spectral_radius(A))
        print(f"{s:7.2f} {pt.p.sum():9.5f} " + " ".join(f"{g:10.2e}" for g in gaps) + f"  {rho:.4f}")


if __name__ == "__main__":
    main()

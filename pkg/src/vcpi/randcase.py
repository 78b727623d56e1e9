"""Random small test networks with feasible, moderately loaded operating points."""

from __future__ import annotations

import numpy as np

from .grid import Branch, Bus, BusKind, Network
from .powerflow import PowerFlowError, assemble_jacobian, check_spectral_condition, solve_power_flow


def random_network(seed: int, size: int | None = None, *, lossy: bool = True,
                   max_tries: int = 50) -> Network:
    """A connected ``size``-bus network (3-6 buses by default) whose base case
    solves and satisfies the spectral check.

    Topology is a random spanning tree plus a few chords; one or two buses
    are generators sharing the load.  Branches have ``b`` in [-20, -5] and,
    when ``lossy``, ``g`` up to a fifth of ``|b|``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        N = int(size if size is not None else rng.integers(3, 7))
        m = int(rng.integers(1, min(2, N - 1) + 1))
        edges = {(int(rng.integers(0, k)), k) for k in range(1, N)}
        for _ in range(int(rng.integers(0, N))):
            a, b = sorted(rng.choice(N, 2, replace=False).tolist())
            edges.add((a, b))
        branches = []
        for a, b in sorted(edges):
            bb = -rng.uniform(5, 20)
            gg = rng.uniform(0, 0.2) * -bb if lossy else 0.0
            branches.append(Branch(a + 1, b + 1, complex(gg, bb)))
        perm = rng.permutation(N)
        gens = set(perm[:m].tolist())
        p_load = -rng.uniform(0.1, 0.6, N)
        q_load = -rng.uniform(0.0, 0.25, N)
        total = -sum(p_load[k] for k in range(N) if k not in gens)
        buses = []
        for k in range(N):
            if k in gens:
                buses.append(Bus(k + 1, BusKind.GENERATOR, total / m, 0.0,
                                 float(rng.uniform(0.98, 1.05))))
            else:
                buses.append(Bus(k + 1, BusKind.LOAD, float(p_load[k]), float(q_load[k])))
        net = Network(tuple(buses), tuple(branches), 100.0)
        try:
            pt = solve_power_flow(net)
        except PowerFlowError:
            continue
        if check_spectral_condition(assemble_jacobian(net, pt), pt.v_load).holds:
            return net
    raise RuntimeError(f"no feasible random case for seed {seed}")

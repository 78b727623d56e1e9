"""Area processors: the per-bus filters grouped into non-overlapping blocks.

Each area integrates the rows of the buses it owns and needs only the
phasors and states of buses one branch outside its border.  With a single
area the whole constrained system can be solved in one step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import networkx as nx
import numpy as np

from ..grid import CaseError, Network
from ..oracle import IndexKind, _bordered, _solve
from .network import dense_system


@dataclass(frozen=True)
class Area:
    label: object
    buses: tuple[int, ...]
    boundary: tuple[int, ...]   # outside buses adjacent to this area
    rows: np.ndarray            # state rows owned by the area
    cols: np.ndarray            # state columns it may read (own + boundary)


class MultiAreaSystem:
    """Euler filter integrated area by area, states in network order."""

    def __init__(self, network: Network, kind, areas: list[Area], tau: float):
        self.network = network
        self.kind = IndexKind.parse(kind)
        self.areas = areas
        self.tau = float(tau)
        n, N = network.n, network.size
        width = n + N * (2 if self.kind is IndexKind.DQGDQL else 1)
        self.state = np.zeros(width)

    @property
    def p(self) -> int:
        return len(self.areas)

    def _check_locality(self, A: np.ndarray) -> None:
        for area in self.areas:
            outside = np.setdiff1d(np.arange(A.shape[1]), area.cols)
            if np.any(A[np.ix_(area.rows, outside)]):
                raise AssertionError(f"area {area.label} reads beyond its border")
        self._checked = True

    def step(self, theta, v, p, q, h: float) -> None:
        A, b = dense_system(self.kind, self.network, theta, v, p, q)
        if not getattr(self, "_checked", False):
            self._check_locality(A)
        new = self.state.copy()
        for area in self.areas:
            f = b[area.rows] - A[np.ix_(area.rows, area.cols)] @ self.state[area.cols]
            new[area.rows] += (h / self.tau) * f
        self.state = new

    def run(self, theta, v, p, q, h: float, rounds: int) -> np.ndarray:
        """``rounds`` steps at fixed measurements."""
        A, b = dense_system(self.kind, self.network, theta, v, p, q)
        self._check_locality(A)
        blocks = [(a.rows, a.cols, A[np.ix_(a.rows, a.cols)], b[a.rows]) for a in self.areas]
        g = h / self.tau
        for _ in range(rounds):
            new = self.state.copy()
            for rows, cols, Ab, bb in blocks:
                new[rows] += g * (bb - Ab @ self.state[cols])
            self.state = new
        return self.estimates()

    def centralized_solve(self, theta, v, p, q) -> np.ndarray:
        """One-area case: the constrained linear solve the filter settles to."""
        if self.p != 1:
            raise ValueError("a one-shot solve needs a single area")
        A, b = dense_system(self.kind, self.network, theta, v, p, q)
        n, N = self.network.n, self.network.size
        if self.kind is IndexKind.DQGDQL:
            # consistent but doubly singular: pin both angle gauges at their zero-start sums
            C = np.zeros((2, A.shape[1]))
            C[0, n:n + N] = 1.0
            C[1, n + N:] = 1.0
            sol, *_ = np.linalg.lstsq(np.vstack([A, C]), np.concatenate([b, [0.0, 0.0]]),
                                      rcond=None)
            self.state = sol
        else:
            sol = _solve(_bordered(A, n, N), np.concatenate([b, [0.0]]))
            self.state = sol[:-1]
        return self.estimates()

    def estimates(self) -> np.ndarray:
        return self.state[: self.network.n].copy()


def _graph(network: Network) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(network.ids)
    g.add_edges_from((br.from_bus, br.to_bus) for br in network.branches)
    return g


def grow_areas(network: Network, seeds) -> dict[int, int]:
    """Assign each bus to its hop-nearest seed (ties to the earlier seed).

    Every area is connected: a bus's shortest path to its seed stays inside.
    """
    g = _graph(network)
    dist = [nx.single_source_shortest_path_length(g, s) for s in seeds]
    return {b: min(range(len(seeds)), key=lambda k: (dist[k][b], k)) for b in network.ids}


def partition_multiarea(network: Network, areas: Mapping[int, object], kind=IndexKind.DVLDVG,
                        tau: float = 10.0) -> MultiAreaSystem:
    """Block the filter states by area; every bus must map to one connected area."""
    ids = network.ids
    missing = set(ids) - set(areas)
    extra = set(areas) - set(ids)
    if missing or extra:
        raise CaseError(f"area map is not a partition (missing {sorted(missing)}, "
                        f"unknown {sorted(extra)})")
    kind = IndexKind.parse(kind)
    g = _graph(network)
    n, N = network.n, network.size
    pos = {b: k for k, b in enumerate(ids)}

    def state_rows(buses):
        rows = [pos[b] for b in buses if pos[b] < n]
        rows += [n + pos[b] for b in buses]
        if kind is IndexKind.DQGDQL:
            rows += [n + N + pos[b] for b in buses]
        return np.array(sorted(rows), dtype=int)

    out = []
    for label in sorted(set(areas.values()), key=str):
        own = sorted(b for b in ids if areas[b] == label)
        if not nx.is_connected(g.subgraph(own)):
            raise CaseError(f"area {label!r} is not connected")
        border = sorted({nb for b in own for nb in g.neighbors(b)} - set(own))
        out.append(Area(label, tuple(own), tuple(border), state_rows(own),
                        state_rows(own + border)))
    return MultiAreaSystem(network, kind, out, tau)

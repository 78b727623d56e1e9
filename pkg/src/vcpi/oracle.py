"""Centralised index computation and a brute-force finite-difference check.

All three indices are defined with every bus holding its active injection
fixed.  On a lossy network that is one equation too many (losses move with
the voltages), so the linear solves carry one extra unknown: a uniform shift
of every active injection.  The angle gauge is fixed by ``sum(aux) = 0``.
This is the solution the distributed filters settle on, and it makes the
indices independent of which generator is used as reference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Network
from .powerflow import (JacobianBlocks, OperatingPoint, PowerFlowError, injections,
                        solve_power_flow)


class IndexKind(enum.Enum):
    DVDQ = "dVdQ"
    DVLDVG = "dVLdVG"
    DQGDQL = "dQGdQL"

    @property
    def open_circuit(self) -> float:
        return {"dVdQ": 0.0, "dVLdVG": 1.0, "dQGdQL": -1.0}[self.value]

    @property
    def worst_is_max(self) -> bool:
        return self is not IndexKind.DQGDQL

    @classmethod
    def parse(cls, text) -> "IndexKind":
        if isinstance(text, cls):
            return text
        for k in cls:
            if k.value.lower() == str(text).lower() or k.name.lower() == str(text).lower():
                return k
        raise ValueError(f"unknown index kind {text!r}")


class CollapseError(RuntimeError):
    """The constrained sensitivity system is singular."""


@dataclass(frozen=True)
class IndexVector:
    kind: IndexKind
    values: np.ndarray
    bus_ids: tuple[int, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.bus_ids),):
            raise ValueError("one value per load bus expected")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, bus_id: int) -> float:
        return float(self.values[self.bus_ids.index(bus_id)])

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.bus_ids, self.values.tolist()))


def _load_ids(network: Network) -> tuple[int, ...]:
    return tuple(b.id for b in network.buses[: network.n])


def _bordered(A: sp.spmatrix, n: int, N: int) -> sp.csc_matrix:
    """Append the uniform-injection column and the angle gauge row to ``A``."""
    col = sp.csr_matrix(np.concatenate([np.zeros(n), np.ones(N)])[:, None])
    row = sp.csr_matrix(np.concatenate([np.zeros(n), np.ones(N), [0.0]])[None, :])
    return sp.vstack([sp.hstack([A, col]), row]).tocsc()


def _solve(M: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            sol = spla.spsolve(M, rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise CollapseError(f"singular sensitivity system: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise CollapseError("singular sensitivity system")
    cond_probe = np.abs(sol).max()
    if cond_probe > 1e12:
        raise CollapseError("sensitivity system numerically singular")
    return sol


def system_dvdq(blocks: JacobianBlocks, v_load: np.ndarray, q_load: np.ndarray):
    """Matrix and forcing of the dV/dQ filter, unknowns ``(x, y)``."""
    Vl = sp.diags(v_load)
    A = sp.bmat([[blocks.dQL_dVL @ Vl, blocks.dQL_dtheta],
                 [blocks.dP_dVL @ Vl, blocks.dP_dtheta]]).tocsr()
    b = np.concatenate([q_load, np.zeros(blocks.n + blocks.m)])
    return A, b


def system_dvldvg(blocks: JacobianBlocks):
    """Matrix and forcing of the dVL/dVG filter, unknowns ``(x, y)``."""
    A = sp.bmat([[blocks.dQL_dVL, blocks.dQL_dtheta],
                 [blocks.dP_dVL, blocks.dP_dtheta]]).tocsr()
    ones = np.ones(blocks.m)
    b = -np.concatenate([blocks.dQL_dVG @ ones, blocks.dP_dVG @ ones])
    return A, b


def system_dqgdql(blocks: JacobianBlocks):
    """Matrix and forcing of the dQG/dQL filter, unknowns ``(x, y, z)``."""
    n, N = blocks.n, blocks.n + blocks.m
    PVt = blocks.dP_dVL.T
    A = sp.bmat([
        [blocks.dQL_dVL.T, PVt, -PVt],
        [blocks.dQL_dtheta.T, blocks.dP_dtheta.T, None],
        [sp.csr_matrix((N, n)), None, blocks.dP_dtheta.T],
    ]).tocsr()
    ones = np.ones(blocks.m)
    b = np.concatenate([blocks.dQG_dVL.T @ ones, np.zeros(N), -(blocks.dQG_dtheta.T @ ones)])
    return A, b


def index_dvdq(blocks: JacobianBlocks, point: OperatingPoint) -> IndexVector:
    n, N = blocks.n, blocks.n + blocks.m
    A, b = system_dvdq(blocks, point.v_load, point.q[:n])
    sol = _solve(_bordered(A, n, N), np.concatenate([b, [0.0]]))
    return IndexVector(IndexKind.DVDQ, sol[:n], _load_ids(point.network))


def index_dvldvg(blocks: JacobianBlocks, point: OperatingPoint) -> IndexVector:
    n, N = blocks.n, blocks.n + blocks.m
    A, b = system_dvldvg(blocks)
    sol = _solve(_bordered(A, n, N), np.concatenate([b, [0.0]]))
    return IndexVector(IndexKind.DVLDVG, sol[:n], _load_ids(point.network))


def index_dqgdql(blocks: JacobianBlocks, point: OperatingPoint) -> IndexVector:
    """Adjoint solve: the transpose of the bordered dVL/dVG matrix."""
    n, N = blocks.n, blocks.n + blocks.m
    A, _ = system_dvldvg(blocks)
    ones = np.ones(blocks.m)
    rhs = np.concatenate([blocks.dQG_dVL.T @ ones, blocks.dQG_dtheta.T @ ones, [0.0]])
    sol = _solve(_bordered(A, n, N).T.tocsc(), rhs)
    return IndexVector(IndexKind.DQGDQL, sol[:n], _load_ids(point.network))


def compute_index(kind: IndexKind, blocks: JacobianBlocks, point: OperatingPoint) -> IndexVector:
    kind = IndexKind.parse(kind)
    fn = {IndexKind.DVDQ: index_dvdq, IndexKind.DVLDVG: index_dvldvg,
          IndexKind.DQGDQL: index_dqgdql}[kind]
    return fn(blocks, point)


def index_dvdq_dense(blocks: JacobianBlocks, point: OperatingPoint) -> IndexVector:
    """Reduced dense route: form dQL/dVL, then solve for the index.

    The pseudoinverse of the angle block is replaced by the same bordered
    solve, one column at a time.
    """
    n, N = blocks.n, blocks.n + blocks.m
    Pt = blocks.dP_dtheta.toarray()
    border = np.block([[Pt, np.ones((N, 1))], [np.ones((1, N)), np.zeros((1, 1))]])
    rhs = np.vstack([blocks.dP_dVL.toarray(), np.zeros((1, n))])
    X = np.linalg.solve(border, rhs)[:N]
    S = blocks.dQL_dVL.toarray() - blocks.dQL_dtheta.toarray() @ X
    vals = np.linalg.solve(S * point.v_load[None, :], point.q[:n])
    return IndexVector(IndexKind.DVDQ, vals, _load_ids(point.network))


# --- finite differences ---------------------------------------------------

FD_EPS = 1e-6
FD_TOL = 1e-12


class FDOracleError(RuntimeError):
    pass


def _resolve(network: Network, point: OperatingPoint, what: str) -> OperatingPoint:
    try:
        return solve_power_flow(network, point.reference, point.snapshot,
                                distributed_slack=True, tol=FD_TOL)
    except PowerFlowError as exc:
        raise FDOracleError(f"re-solve failed for perturbation {what}: {exc}") from None


def oracle_fd(network: Network, point: OperatingPoint, kind, eps: float = FD_EPS) -> IndexVector:
    """Indices by central differences of re-solved power flows.

    Every perturbed case is solved from scratch with the nonlinear power
    flow (uniform slack, as in the linear route), then differenced.
    """
    kind = IndexKind.parse(kind)
    n, N = network.n, network.size
    base = network.with_injections(point.p, point.q)
    ids = _load_ids(network)

    if kind is IndexKind.DVLDVG:
        S = np.zeros((n, network.m))
        for c, k in enumerate(range(n, N)):
            vs = []
            for sgn in (1, -1):
                buses = list(base.buses)
                buses[k] = replace(buses[k], v_setpoint=buses[k].v_setpoint + sgn * eps)
                vs.append(_resolve(base.with_buses(buses), point,
                                   f"v_set[{buses[k].id}] {sgn * eps:+g}").v_load)
            S[:, c] = (vs[0] - vs[1]) / (2 * eps)
        return IndexVector(kind, S.sum(axis=1), ids)

    S = np.zeros((n, n))
    QG = np.zeros(n)
    for j in range(n):
        out = []
        for sgn in (1, -1):
            q = point.q.copy()
            q[j] += sgn * eps
            sol = _resolve(base.with_injections(point.p, q), point, f"Q[{ids[j]}] {sgn * eps:+g}")
            _, q_real = injections(network, sol.snapshot)
            out.append((sol.v_load, q_real[n:].sum()))
        S[:, j] = (out[0][0] - out[1][0]) / (2 * eps)
        QG[j] = (out[0][1] - out[1][1]) / (2 * eps)
    if kind is IndexKind.DVDQ:
        vals = (S @ point.q[:n]) / point.v_load
    else:
        vals = QG
    return IndexVector(kind, vals, ids)


def worst_case(index: IndexVector) -> tuple[int, float]:
    """Most critical bus and its value.

    dV/dQ ranks by magnitude (consuming loads give negative values under the
    injection sign convention), dVL/dVG by the largest value and dQG/dQL by
    the most negative.  Ties go to the lowest bus id.
    """
    if len(index.values) == 0:
        raise ValueError("empty index vector")
    if index.kind is IndexKind.DVDQ:
        key = abs
    elif index.kind is IndexKind.DVLDVG:
        key = float
    else:
        key = lambda v: -v  # noqa: E731
    best = max(zip(index.bus_ids, index.values), key=lambda t: (key(t[1]), -t[0]))
    return best[0], float(best[1])

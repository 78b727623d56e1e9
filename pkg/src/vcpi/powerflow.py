"""Newton power flow, Jacobian blocks and the spectral check on them."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import Network, PhasorSnapshot, data_coefficients

MAX_ITER = 50
TOL = 1e-10


class PowerFlowError(RuntimeError):
    """Newton iteration failed; usually an infeasible or near-collapse case."""


class SingularJacobianError(PowerFlowError):
    pass


class GenMode(enum.Enum):
    PV = "PV"
    PQ_LIMIT = "PQ-at-limit"


def injections(network: Network, snapshot: PhasorSnapshot) -> tuple[np.ndarray, np.ndarray]:
    """Active and reactive injections implied by the phasors (internal order)."""
    v = snapshot.phasors
    s = v * np.conj(network.Y @ v)
    return s.real, s.imag


def _partials(network: Network, snapshot: PhasorSnapshot, p: np.ndarray, q: np.ndarray):
    """Full partial derivative matrices w.r.t. theta and |V| for all buses."""
    d, D = data_coefficients(network, snapshot)
    v = snapshot.v_mag
    dP_dth = d.copy()
    dQ_dth = -D.copy()
    np.fill_diagonal(dP_dth, -q + np.diag(d))
    np.fill_diagonal(dQ_dth, p - np.diag(D))
    # V_j dP_i/dV_j = D_ij, V_i dP_i/dV_i = P_i + D_ii; same pattern for Q with d
    dP_dV = D.copy()
    dQ_dV = d.copy()
    np.fill_diagonal(dP_dV, p + np.diag(D))
    np.fill_diagonal(dQ_dV, q + np.diag(d))
    return dP_dth, dP_dV / v[None, :], dQ_dth, dQ_dV / v[None, :]


@dataclass(frozen=True)
class OperatingPoint:
    network: Network
    snapshot: PhasorSnapshot
    p: np.ndarray
    q: np.ndarray
    reference: int
    iterations: int = 0
    modes: dict = field(default_factory=dict)

    @property
    def v_load(self) -> np.ndarray:
        return self.snapshot.v_mag[: self.network.n]

    def residual(self) -> float:
        """Largest mismatch between stored and recomputed injections."""
        p, q = injections(self.network, self.snapshot)
        return float(max(np.abs(p - self.p).max(), np.abs(q - self.q).max()))


def flat_start(network: Network) -> PhasorSnapshot:
    v = np.array([b.v_setpoint if b.v_setpoint is not None else 1.0 for b in network.buses])
    return PhasorSnapshot(np.zeros(network.size), v)


def solve_power_flow(
    network: Network,
    reference_bus: int | None = None,
    initial: PhasorSnapshot | None = None,
    *,
    distributed_slack: bool = False,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> OperatingPoint:
    """Newton-Raphson power flow.

    ``reference_bus`` is a generator id (default: first generator); its angle
    is pinned to zero.  With a single slack the reference bus absorbs the
    active power mismatch.  With ``distributed_slack=True`` every bus shifts
    its active injection by the same amount instead, which is the convention
    the sensitivity indices are defined under for lossy networks.
    """
    n, N = network.n, network.size
    if network.m == 0:
        raise ValueError("network has no generator bus")
    ref = network.index(reference_bus) if reference_bus is not None else n
    if network.buses[ref].is_load:
        raise ValueError(f"reference bus {network.buses[ref].id} is not a generator")
    snap = initial if initial is not None else flat_start(network)
    theta = np.array(snap.theta, dtype=float)
    theta -= theta[ref]
    v = np.array(snap.v_mag, dtype=float)
    for k in range(n, N):
        v[k] = network.buses[k].v_setpoint

    p_spec, q_spec = network.p_spec, network.q_spec
    ang = [k for k in range(N) if k != ref]
    p_rows = list(range(N)) if distributed_slack else ang
    loads = list(range(n))
    kappa = 0.0

    def mismatch(theta, v, kappa):
        p, q = injections(network, PhasorSnapshot(theta, v))
        return np.concatenate([(p - p_spec - kappa)[p_rows], (q - q_spec)[loads]]), p, q

    f, p, q = mismatch(theta, v, kappa)
    norm = np.abs(f).max()
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise PowerFlowError(f"no convergence after {max_iter} iterations (mismatch {norm:.3e})")
        it += 1
        dP_dth, dP_dV, dQ_dth, dQ_dV = _partials(network, PhasorSnapshot(theta, v), p, q)
        J = np.block([
            [dP_dth[np.ix_(p_rows, ang)], dP_dV[np.ix_(p_rows, loads)]],
            [dQ_dth[np.ix_(loads, ang)], dQ_dV[np.ix_(loads, loads)]],
        ])
        if distributed_slack:
            J = np.hstack([J, np.concatenate([-np.ones(N), np.zeros(n)])[:, None]])
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Newton matrix (operating point at bifurcation?)") from None
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError("non-finite Newton step")
        alpha = 1.0
        for _ in range(8):
            th_new = theta.copy()
            v_new = v.copy()
            th_new[ang] += alpha * step[: N - 1]
            v_new[loads] += alpha * step[N - 1 : N - 1 + n]
            k_new = kappa + alpha * step[-1] if distributed_slack else 0.0
            if np.all(v_new > 0):
                f_new, p_new, q_new = mismatch(th_new, v_new, k_new)
                if np.abs(f_new).max() < norm:
                    break
            alpha *= 0.5
        else:
            raise PowerFlowError(f"damped Newton stalled at mismatch {norm:.3e}")
        theta, v, kappa = th_new, v_new, k_new
        f, p, q = f_new, p_new, q_new
        norm = np.abs(f).max()

    return OperatingPoint(network, PhasorSnapshot(theta, v, snap.timestamp), p, q,
                          network.buses[ref].id, it)


@dataclass(frozen=True)
class JacobianBlocks:
    """Sparse blocks of the linearised power flow at one operating point.

    Rows/columns follow the network's internal order: angles over all buses,
    ``VL`` over loads, ``VG`` over generators.
    """

    dP_dtheta: sp.csr_matrix
    dP_dVL: sp.csr_matrix
    dP_dVG: sp.csr_matrix
    dQL_dtheta: sp.csr_matrix
    dQL_dVL: sp.csr_matrix
    dQL_dVG: sp.csr_matrix
    dQG_dtheta: sp.csr_matrix
    dQG_dVL: sp.csr_matrix
    dQG_dVG: sp.csr_matrix
    n: int
    m: int


def _jacobian_from(network: Network, snapshot: PhasorSnapshot, p, q) -> JacobianBlocks:
    return blocks_from_partials(network, *_partials(network, snapshot, p, q))


def assemble_jacobian(network: Network, point: OperatingPoint) -> JacobianBlocks:
    """Jacobian blocks from the ``d``/``D`` coefficients and realised injections."""
    return _jacobian_from(network, point.snapshot, point.p, point.q)


@dataclass
class MatrixSpectrum:
    name: str
    eigenvalues: np.ndarray
    zero_eigenvalue: complex
    zero_is_simple: bool
    zero_vector_ok: bool
    min_nonzero_real: float

    @property
    def holds(self) -> bool:
        return self.zero_is_simple and self.zero_vector_ok and self.min_nonzero_real > 0

    def nonzero(self) -> np.ndarray:
        k = int(np.argmin(np.abs(self.eigenvalues)))
        return np.delete(self.eigenvalues, k)


@dataclass
class SpectralReport:
    theta_block: MatrixSpectrum
    reduced: MatrixSpectrum
    scaled: MatrixSpectrum
    use_scaled: bool = True

    @property
    def holds(self) -> bool:
        return self.theta_block.holds and self.reduced.holds and self.scaled.holds

    @property
    def system(self) -> MatrixSpectrum:
        return self.scaled if self.use_scaled else self.reduced

    def to_dict(self) -> dict:
        out = {"holds": self.holds}
        for s in (self.theta_block, self.reduced, self.scaled):
            out[s.name] = {"holds": s.holds, "min_nonzero_real": s.min_nonzero_real,
                           "max_abs": float(np.abs(s.eigenvalues).max()),
                           "zero_is_simple": s.zero_is_simple}
        return out


def _spectrum(name: str, A: np.ndarray, null_vec: np.ndarray) -> MatrixSpectrum:
    w, vecs = np.linalg.eig(A)
    scale = max(np.abs(w).max(), 1.0)
    order = np.argsort(np.abs(w))
    k0 = order[0]
    tol = 1e-8 * scale
    simple = abs(w[k0]) < tol and (len(w) < 2 or abs(w[order[1]]) > tol)
    u = vecs[:, k0]
    u = u / np.linalg.norm(u)
    cos = abs(np.vdot(null_vec / np.linalg.norm(null_vec), u))
    rest = np.delete(w, k0)
    return MatrixSpectrum(name, w, w[k0], bool(simple), bool(cos > 1 - 1e-8),
                          float(rest.real.min()) if rest.size else np.inf)


def check_spectral_condition(blocks: JacobianBlocks, v_load: np.ndarray | None = None,
                      scaled: bool = True) -> SpectralReport:
    """Eigen-structure of the angle block and of the two reduced Jacobians.

    Each should have positive-real-part spectrum apart from a simple zero
    eigenvalue whose right eigenvector is all ones on the angles.  ``v_load``
    is needed for the voltage-scaled variant; ``scaled`` picks which variant
    :attr:`SpectralReport.system` returns.
    """
    n, N = blocks.n, blocks.n + blocks.m
    Pt = blocks.dP_dtheta.toarray()
    PV = blocks.dP_dVL.toarray()
    Qt = blocks.dQL_dtheta.toarray()
    QV = blocks.dQL_dVL.toarray()
    vl = np.ones(n) if v_load is None else np.asarray(v_load)
    one = np.concatenate([np.ones(N), np.zeros(n)])
    return SpectralReport(
        _spectrum("dP_dtheta", Pt, np.ones(N)),
        _spectrum("reduced", np.block([[Pt, PV], [Qt, QV]]), one),
        _spectrum("scaled", np.block([[Pt, PV * vl], [Qt, QV * vl]]), one),
        use_scaled=scaled,
    )


def fd_partials(network: Network, snapshot: PhasorSnapshot, eps: float = 1e-6):
    """Central differences of the injections w.r.t. every angle and magnitude.

    Returns ``(dP_dtheta, dP_dV, dQ_dtheta, dQ_dV)`` over all buses; an
    independent check on :func:`assemble_jacobian`.
    """
    N = network.size
    out = [np.zeros((N, N)) for _ in range(4)]
    for which, base in ((0, snapshot.theta), (1, snapshot.v_mag)):
        for k in range(N):
            cols = []
            for sgn in (1, -1):
                arr = np.array(base, dtype=float)
                arr[k] += sgn * eps
                snap = (PhasorSnapshot(arr, snapshot.v_mag) if which == 0
                        else PhasorSnapshot(snapshot.theta, arr))
                cols.append(injections(network, snap))
            dp = (cols[0][0] - cols[1][0]) / (2 * eps)
            dq = (cols[0][1] - cols[1][1]) / (2 * eps)
            out[which][:, k] = dp
            out[2 + which][:, k] = dq
    return tuple(out)


def blocks_from_partials(network: Network, dP_dth, dP_dV, dQ_dth, dQ_dV) -> JacobianBlocks:
    n = network.n
    L, Gs = slice(0, n), slice(n, None)
    c = sp.csr_matrix
    return JacobianBlocks(
        dP_dtheta=c(dP_dth), dP_dVL=c(dP_dV[:, L]), dP_dVG=c(dP_dV[:, Gs]),
        dQL_dtheta=c(dQ_dth[L]), dQL_dVL=c(dQ_dV[L, L]), dQL_dVG=c(dQ_dV[L, Gs]),
        dQG_dtheta=c(dQ_dth[Gs]), dQG_dVL=c(dQ_dV[Gs, L]), dQG_dVG=c(dQ_dV[Gs, Gs]),
        n=n, m=network.m,
    )

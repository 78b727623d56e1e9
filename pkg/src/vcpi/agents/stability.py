"""Step-size and spectral-radius checks for the discretised filters.

The filter matrices carry a zero eigenvalue per angle block (uniform angle
shifts are invisible to the injections).  Those modes neither grow nor
decay under either scheme, so every check here sets them aside.
"""

from __future__ import annotations

import numpy as np

# eigenvalues below this fraction of the spectral scale are the angle gauge
GAUGE_RTOL = 1e-9


def nonzero_eigenvalues(eigenvalues) -> np.ndarray:
    w = np.asarray(eigenvalues, dtype=complex)
    scale = max(np.abs(w).max(), 1.0)
    return w[np.abs(w) > GAUGE_RTOL * scale]


def euler_stability_bound(eigenvalues, tau: float) -> float:
    """Largest stable Euler step for ``tau dv/dt = b - A v``.

    Each mode needs ``|1 - h lam / tau| < 1``, i.e. ``h < 2 tau Re(lam)/|lam|^2``;
    the binding mode is the one with the smallest ratio.
    """
    nz = nonzero_eigenvalues(eigenvalues)
    if nz.size == 0:
        return np.inf
    if np.any(nz.real <= 0):
        return 0.0
    return float(2 * tau * np.min(nz.real / np.abs(nz) ** 2))


def _left_right_null(A: np.ndarray):
    """Right and left null vectors (columns) of ``A``."""
    u, s, vt = np.linalg.svd(A)
    k = int(np.sum(s < GAUGE_RTOL * max(s.max(), 1.0)))
    return vt[len(s) - k:].T, u[:, len(s) - k:]


def euler_diverges(A: np.ndarray, tau, h: float, steps: int = 20000, seed: int = 0) -> bool:
    """Simulate the homogeneous Euler error recursion and report blow-up.

    The error starts random with its gauge component removed (oblique
    projection along the null space).  Divergence means the error norm ends
    above where it began.  ``tau`` may be a scalar or per-row array.
    """
    A = np.asarray(A, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (A.shape[0],))
    M = np.eye(len(A)) - (h / tau)[:, None] * A
    R, L = _left_right_null(np.diag(1 / tau) @ A)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(len(A))
    if R.shape[1]:
        e = e - R @ np.linalg.solve(L.T @ R, L.T @ e)
    e0 = np.linalg.norm(e)
    # square the iteration matrix to cover many steps cheaply
    P = M
    k = 1
    while k < steps:
        P = P @ P
        k *= 2
        s = np.abs(P).max()
        if not np.isfinite(s):
            return True
        if s > 1e100:
            break
    return bool(np.linalg.norm(P @ e) > e0)


def empirical_onset(A: np.ndarray, tau, lo: float, hi: float, rtol: float = 1e-3,
                    steps: int = 20000) -> float:
    """Bisect the smallest step at which Euler diverges, within ``[lo, hi]``."""
    if euler_diverges(A, tau, lo, steps) or not euler_diverges(A, tau, hi, steps):
        raise ValueError("onset not bracketed by [lo, hi]")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if euler_diverges(A, tau, mid, steps):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def jacobi_iteration_matrix(A: np.ndarray) -> np.ndarray:
    d = np.diag(A)
    if np.any(d == 0):
        raise ValueError("zero diagonal entry: Jacobi splitting undefined")
    return np.eye(len(A)) - A / d[:, None]


def jacobi_spectral_radius(A: np.ndarray) -> float:
    """Spectral radius of ``T^-1 R`` with the gauge eigenvalues (at +1) removed."""
    A = np.asarray(A, dtype=float)
    g = np.linalg.eigvals(jacobi_iteration_matrix(A))
    k0 = len(A) - len(nonzero_eigenvalues(np.linalg.eigvals(A)))
    keep = np.argsort(np.abs(g - 1))[k0:]
    return float(np.abs(g[keep]).max()) if keep.size else 0.0

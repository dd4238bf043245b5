"""Dense Hermitian linear algebra for small matrices.

The eigensolver is a cyclic complex Jacobi iteration vectorised over a stack
of matrices, so a whole parameter grid is diagonalised in one call. Jacobi is
slow for large N but deterministic, needs nothing beyond numpy and is
accurate to a few ulps on the small systems this package targets (N <= 64).
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, NonHermitianInput, ZeroVector

HERM_TOL_REL = 1e-12
MAX_SWEEPS = 100
PHASE_TIE_TOL = 1e-12


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray


def check_hermitian(H, herm_tol=None):
    """Raise NonHermitianInput unless every matrix in the stack is Hermitian.

    ``herm_tol`` is absolute; by default it is ``1e-12 * max|H|`` per matrix.
    """
    H = np.asarray(H)
    dev = np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max(axis=(-1, -2))
    if herm_tol is None:
        tol = HERM_TOL_REL * np.abs(H).max(axis=(-1, -2))
    else:
        tol = herm_tol
    bad = dev > tol
    if np.any(bad):
        raise NonHermitianInput(
            f"matrix deviates from Hermitian by {float(np.max(dev)):.3e} "
            f"(tolerance {float(np.max(np.broadcast_to(tol, dev.shape)[bad])):.3e})")


def jacobi_eigh(H, herm_tol=None, max_sweeps=MAX_SWEEPS):
    """Eigen-decomposition of a Hermitian matrix or a stack of them.

    Parameters
    ----------
    H : array_like, shape (..., N, N)
    herm_tol : float, optional
        Absolute Hermiticity tolerance (default ``1e-12 * max|H|``).
    max_sweeps : int
        Cyclic sweeps allowed before ConvergenceFailure.

    Returns
    -------
    w : ndarray, shape (..., N)
        Eigenvalues in ascending order.
    V : ndarray, shape (..., N, N)
        Unit eigenvectors as columns, ``H @ V[..., :, k] = w[..., k] V[..., :, k]``.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise DimensionMismatch(f"expected square matrices, got shape {H.shape}")
    N = H.shape[-1]
    if N < 1:
        raise DimensionMismatch("empty matrix")
    check_hermitian(H, herm_tol)

    batch_shape = H.shape[:-2]
    A = H.reshape(-1, N, N).copy()
    # symmetrise so rounding in the input cannot seed asymmetric drift
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    B = A.shape[0]
    V = np.broadcast_to(np.eye(N, dtype=complex), (B, N, N)).copy()

    scale = np.sqrt(np.sum(np.abs(A) ** 2, axis=(-1, -2)))
    target = 1e-15 * np.maximum(scale, np.finfo(float).tiny)
    rows = np.arange(B)

    sweeps = 0
    while True:
        off = _offdiag_norm(A)
        todo = off > target
        if not np.any(todo):
            break
        if sweeps >= max_sweeps:
            raise ConvergenceFailure(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {float(off.max()):.3e})")
        idx = rows[todo]
        a_sub, v_sub = A[idx], V[idx]
        for p in range(N - 1):
            for q in range(p + 1, N):
                _rotate(a_sub, v_sub, p, q)
        A[idx], V[idx] = a_sub, v_sub
        sweeps += 1

    w = np.real(np.diagonal(A, axis1=-2, axis2=-1)).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    return w.reshape(batch_shape + (N,)), V.reshape(batch_shape + (N, N))


def _offdiag_norm(A):
    N = A.shape[-1]
    off = ~np.eye(N, dtype=bool)
    return np.sqrt(np.sum(np.abs(A[:, off]) ** 2, axis=-1))


def _rotate(A, V, p, q):
    """Annihilate A[:, p, q] in place with a unitary 2x2 rotation."""
    a = A[:, p, p].real
    b = A[:, q, q].real
    c = A[:, p, q]
    absc = np.abs(c)
    diff = b - a
    # entries this small relative to the diagonal are dropped, not rotated
    active = absc > 1e-18 * (np.abs(a) + np.abs(b))
    safe = np.where(active, absc, 1.0)
    ph = np.where(active, c, 1.0) / safe
    sgn = np.where(diff < 0.0, -1.0, 1.0)
    t = 2.0 * safe * sgn / (np.abs(diff) + np.hypot(diff, 2.0 * safe))
    t = np.where(active, t, 0.0)
    cs = 1.0 / np.sqrt(t * t + 1.0)
    sn = t * cs
    eph = np.conj(ph)
    g_pp = cs
    g_pq = sn
    g_qp = -sn * eph
    g_qq = cs * eph

    col_p = A[:, :, p].copy()
    col_q = A[:, :, q].copy()
    A[:, :, p] = col_p * g_pp[:, None] + col_q * g_qp[:, None]
    A[:, :, q] = col_p * g_pq[:, None] + col_q * g_qq[:, None]
    row_p = A[:, p, :].copy()
    row_q = A[:, q, :].copy()
    A[:, p, :] = np.conj(g_pp)[:, None] * row_p + np.conj(g_qp)[:, None] * row_q
    A[:, q, :] = np.conj(g_pq)[:, None] * row_p + np.conj(g_qq)[:, None] * row_q
    A[:, p, q] = 0.0
    A[:, q, p] = 0.0
    A[:, p, p] = A[:, p, p].real
    A[:, q, q] = A[:, q, q].real

    vp = V[:, :, p].copy()
    vq = V[:, :, q].copy()
    V[:, :, p] = vp * g_pp[:, None] + vq * g_qp[:, None]
    V[:, :, q] = vp * g_pq[:, None] + vq * g_qq[:, None]


def hermitian_eigensystem(H, herm_tol=None, max_sweeps=MAX_SWEEPS):
    """Eigenpairs of a single Hermitian matrix, ascending in energy."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise DimensionMismatch(f"expected one N x N matrix, got shape {H.shape}")
    w, V = jacobi_eigh(H, herm_tol=herm_tol, max_sweeps=max_sweeps)
    return [EigenPair(float(w[k]), V[:, k].copy()) for k in range(len(w))]


def phase_fix(v):
    """Rotate a vector (or the last axis of a stack) to a canonical global phase.

    The largest-magnitude component becomes real and non-negative. Magnitude
    ties within 1e-12 go to the lowest index. The map is idempotent.
    """
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    top = mag.max(axis=-1, keepdims=True)
    if np.any(top == 0.0):
        raise ZeroVector("cannot fix the phase of a zero vector")
    idx = np.argmax(mag >= top - PHASE_TIE_TOL, axis=-1)[..., None]
    pivot = np.take_along_axis(v, idx, axis=-1)
    pmag = np.abs(pivot)
    # leave already-fixed vectors untouched so the map is exactly idempotent
    done = (pivot.imag == 0) & (pivot.real >= 0)
    out = v * np.where(done, 1.0 + 0j, np.conj(pivot) / np.where(pmag > 0, pmag, 1.0))
    np.put_along_axis(out, idx, pmag + 0j, axis=-1)
    return out


def overlap(u, v):
    """Inner product sum(conj(u) * v) over the last axis (broadcasting)."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionMismatch(f"vector lengths differ: {u.shape[-1]} vs {v.shape[-1]}")
    if u is v or (u.shape == v.shape and np.array_equal(u, v)):
        return np.sum(np.abs(u) ** 2, axis=-1) + 0j
    return np.sum(np.conj(u) * v, axis=-1)

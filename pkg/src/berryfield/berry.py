"""Eigenbundles, Berry potentials, curvatures, phases and gauge transformations.

Sign conventions (fixed here and reported by the verification suite):

* ``A = i <n|grad n>`` and ``Phi = -i <n|d_t n>``; both are real, so the code
  keeps ``-Im <n|D n>`` and ``+Im <n|D_t n>``.
* ``Omega = -grad Phi - d_t A = -2 Im <d_a n|d_t n>`` and
  ``B = curl A`` with ``F_ab = -2 Im <d_a n|d_b n>``.
* With these, the lower band of ``R . sigma`` has ``B = +R_hat / (2 R**2)``,
  flux ``+2 pi`` out of any surface enclosing the origin (charge +1).
* Discrete holonomies are ``-arg prod <n_j|n_j+1>``, which approximates the
  loop integral of ``A``.
* A gauge transformation ``|n> -> exp(i Lambda) |n>`` sends ``A -> A - grad Lambda``
  and ``Phi -> Phi + d_t Lambda``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (AllPointsDegenerate, DegeneratePointOnLoop, GapTooSmall,
                     NonAdjacentLoopPoints)
from .grid import (ParameterGrid, ScalarField, VectorField, cumulative_time_integral, curl_field,
                   diff, diff_mask, gradient_field, partial)
from .linalg import jacobi_eigh, phase_fix
from .models import (HamiltonianFamily, evaluate_hamiltonian, gradient_hamiltonian,
                     time_derivative_hamiltonian)

GAP_TOL_REL = 1e-6
OVERLAP_FLOOR = 0.5
TIME_JUMP_TOL = 1.0  # radians; a smooth gauge moves far less per time step
SEAM_TOL = 0.5  # radians of link phase that mark a gauge discontinuity

CONVENTIONS = {
    "connection": "A = i<n|grad n> = -Im<n|grad n>",
    "scalar_potential": "Phi = -i<n|d_t n> = Im<n|d_t n>",
    "electric_curvature": "Omega = -grad Phi - d_t A = -2 Im<d_a n|d_t n>",
    "magnetic_curvature": "B = curl A, F_ab = -2 Im<d_a n|d_b n>",
    "monopole_sign": "lower band of R.sigma: B = +R/(2|R|^3), flux +2pi, charge +1",
    "holonomy": "phase = -arg prod <n_j|n_j+1> (approximates loop integral of A)",
    "plaquette": "F = -arg(U01 U12 U23 U30), counter-clockwise in (axis0, axis1); C = sum F / 2pi",
    "gauge_fix": "largest component real and >= 0, then parallel transport along axis 0 "
                 "(base line), axis 1 (base plane), axis 2 per time slice; periodic axes "
                 "spread the line holonomy evenly; time follows the canonical phase with jump repair",
    "gauge_transform": "|n> -> exp(i Lambda)|n>: A -> A - grad Lambda, Phi -> Phi + d_t Lambda",
    "geometric_phase": "gamma = -int_0^t Phi dt', gamma(t=0) = 0",
    "velocity": "v = <n|grad H|n>/hbar + 2 Im sum_m <n|d_a H|m><m|d_t H|n>/(e_n-e_m)^2 "
                "(first-order adiabatic state) = grad e/hbar - Omega",
}


@dataclass
class EigenBundle:
    """Band ``band`` of ``family`` solved on every node of ``grid``.

    ``vectors`` has shape ``grid.full_shape + (N,)``; ``degeneracy_mask`` is
    True where the band is (nearly) degenerate or the overlap test failed.
    ``eigenvalues``/``eigenvectors`` keep the whole spectrum for the
    sum-over-states oracles.
    """

    family: HamiltonianFamily
    grid: ParameterGrid
    band: int
    energies: ScalarField
    vectors: np.ndarray
    degeneracy_mask: np.ndarray
    gap_tol: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def valid(self):
        return ~self.degeneracy_mask


@dataclass
class GaugePotential:
    A: VectorField
    Phi: ScalarField
    source: str
    dA_dt: Optional[VectorField] = None
    hbar: float = 1.0
    imag_residue: float = 0.0


@dataclass
class GeometricPhase:
    gamma: ScalarField


def _inner(u, v):
    return np.sum(np.conj(u) * v, axis=-1)


def _unit_phase(z):
    mag = np.abs(z)
    return np.where(mag > 0, np.conj(z) / np.where(mag > 0, mag, 1.0), 1.0)


# ---------------------------------------------------------------------------
# bundle construction


def solve_spectrum(family, grid, herm_tol=None):
    """All eigenvalues and eigenvectors on the grid, shapes (..., N) and (..., N, N)."""
    R, t = grid.mesh()
    R = np.broadcast_to(R, grid.full_shape + (3,))
    t = np.broadcast_to(t, grid.full_shape)
    w = np.empty(grid.full_shape + (family.dim,))
    V = np.empty(grid.full_shape + (family.dim, family.dim), dtype=complex)
    # one time slice at a time keeps the Jacobi work arrays small
    for tau in range(grid.nt):
        H = evaluate_hamiltonian(family, R[:, :, :, tau], t[:, :, :, tau])
        w[:, :, :, tau], V[:, :, :, tau] = jacobi_eigh(H, herm_tol=herm_tol)
    return w, V


def _transport_axis(V, valid, axis, periodic):
    """Parallel-transport V in place along ``axis`` from index 0.

    Each node is rotated so its overlap with the previous valid node on the
    same line is real and positive. On a periodic axis the phase left over
    when closing the line is spread evenly over its nodes so the gauge is
    continuous across the seam.
    """
    f = np.moveaxis(V, axis, 0)
    m = np.moveaxis(valid, axis, 0)
    n = f.shape[0]
    if n == 1:
        return
    ref = f[0].copy()
    have = m[0].copy()
    for i in range(1, n):
        ov = _inner(ref, f[i])
        use = have & m[i]
        ph = np.where(use, _unit_phase(ov), 1.0)
        f[i] *= ph[..., None]
        ref = np.where(m[i][..., None], f[i], ref)
        have |= m[i]
    if periodic:
        ov = _inner(f[n - 1], f[0])
        ok = m[n - 1] & m[0]
        theta = np.where(ok, -np.angle(ov), 0.0)
        # unwrap across neighbouring lines so the twist varies smoothly
        for ax in range(theta.ndim - 1):
            if theta.shape[ax] > 1:
                theta = np.unwrap(theta, axis=ax)
        steps = np.arange(n).reshape((n,) + (1,) * theta.ndim)
        f *= np.exp(-1j * theta[None] * steps / n)[..., None]


def _smooth_gauge(V, valid, grid):
    """Tree gauge per time slice: base line, then base plane, then the volume."""
    per = grid.periodic
    for tau in range(grid.nt):
        Vt = V[:, :, :, tau]
        mt = valid[:, :, :, tau]
        _transport_axis(Vt[:, 0:1, 0:1], mt[:, 0:1, 0:1], 0, per[0])
        _transport_axis(Vt[:, :, 0:1], mt[:, :, 0:1], 1, per[1])
        _transport_axis(Vt, mt, 2, per[2])


def _repair_time_jumps(V, valid, grid, base):
    """Keep the base node's canonical phase but remove sudden phase flips in time."""
    i, j, k = base
    corr = 1.0 + 0j
    prev = None
    for tau in range(grid.nt):
        if not valid[i, j, k, tau]:
            continue
        v = V[i, j, k, tau] * corr
        if prev is not None:
            ov = _inner(prev, v)
            if abs(np.angle(ov)) > TIME_JUMP_TOL:
                extra = _unit_phase(ov)
                corr = corr * extra
                v = v * extra
        V[i, j, k, tau] = v
        prev = v
    return corr


def build_eigenbundle(family, grid, band, gap_tol=None, herm_tol=None,
                      overlap_floor=OVERLAP_FLOOR, smooth=True) -> EigenBundle:
    """Solve ``family`` on ``grid`` and select band ``band`` in a smooth gauge.

    Parameters
    ----------
    gap_tol : float, optional
        Nodes whose gap to an adjacent band is below this are masked.
        Default ``1e-6`` times the largest absolute energy on the grid.
    overlap_floor : float
        Adjacent valid nodes with ``|<n(p)|n(q)>|`` below this are both
        masked; this catches crossings the gap test misses.
    smooth : bool
        Apply parallel-transport smoothing after phase fixing. Without it
        the vectors are only in the canonical per-node gauge.
    """
    N = family.dim
    if not 0 <= band < N:
        raise ValueError(f"band {band} outside 0..{N - 1}")
    w, V = solve_spectrum(family, grid, herm_tol)
    if gap_tol is None:
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        gap_tol = GAP_TOL_REL * (scale if scale > 0 else 1.0)
    gap = np.full(grid.full_shape, np.inf)
    if band > 0:
        gap = np.minimum(gap, w[..., band] - w[..., band - 1])
    if band < N - 1:
        gap = np.minimum(gap, w[..., band + 1] - w[..., band])
    degenerate = gap < gap_tol

    vec = phase_fix(V[..., :, band])
    valid = ~degenerate
    for axis in range(4):
        n = grid.full_shape[axis]
        if n == 1:
            continue
        per = grid.periodic[axis] if axis < 3 else False
        a = np.moveaxis(vec, axis, 0)
        m = np.moveaxis(valid, axis, 0)
        nxt = np.roll(a, -1, axis=0)
        mnext = np.roll(m, -1, axis=0)
        bad = (np.abs(_inner(a, nxt)) < overlap_floor) & m & mnext
        if not per:
            bad[-1] = False
        both = bad | np.roll(bad, 1, axis=0)
        valid = valid & ~np.moveaxis(both, 0, axis)
    degenerate = ~valid
    if not np.any(valid):
        raise AllPointsDegenerate("every grid node is degenerate for this band")

    if smooth:
        if grid.nt > 1:
            # the transport tree is rooted at node (0, 0, 0) in every slice
            _repair_time_jumps(vec, valid, grid, (0, 0, 0))
        _smooth_gauge(vec, valid, grid)

    energies = ScalarField(grid, w[..., band], valid, f"epsilon_{band}", "energy")
    return EigenBundle(family, grid, band, energies, vec, degenerate, float(gap_tol), w, V)


def gauge_seams(bundle, tol=SEAM_TOL):
    """Nodes next to a link whose phase exceeds ``tol`` along any axis.

    In a smooth gauge a link phase is about ``A h``, so a large one marks a
    seam (Dirac string, or the wrap of a torus with nonzero Chern number)
    where finite differences of the potentials are meaningless. Gauge
    invariant quantities are unaffected.
    """
    g = bundle.grid
    out = np.zeros(g.full_shape, dtype=bool)
    for axis in range(4):
        n = g.full_shape[axis]
        if n == 1:
            continue
        per = g.periodic[axis] if axis < 3 else False
        a = np.moveaxis(bundle.vectors, axis, 0)
        m = np.moveaxis(bundle.valid, axis, 0)
        ph = np.abs(np.angle(_inner(a, np.roll(a, -1, axis=0))))
        bad = (ph > tol) & m & np.roll(m, -1, axis=0)
        if not per:
            bad[-1] = False
        # a stencil of width two on either side sees the bad link
        near = bad | np.roll(bad, 1, axis=0)
        near = near | np.roll(near, 1, axis=0) | np.roll(near, -1, axis=0)
        out |= np.moveaxis(near, 0, axis)
    return out


def gauge_transform_apply(bundle, Lam) -> EigenBundle:
    """Multiply every vector by ``exp(i Lambda)``; no phase fixing afterwards.

    ``Lam`` is either an array broadcastable to the grid's full shape or a
    callable ``Lam(R, t)`` evaluated on the grid mesh (``R`` has a trailing
    axis of length 3).
    """
    if callable(Lam):
        R, t = bundle.grid.mesh()
        values = np.asarray(Lam(R, t), dtype=float)
    else:
        values = np.asarray(Lam, dtype=float)
    values = np.broadcast_to(values, bundle.grid.full_shape)
    vec = bundle.vectors * np.exp(1j * values)[..., None]
    return replace(bundle, vectors=vec)


# ---------------------------------------------------------------------------
# potentials


def connection_eigenstate(bundle) -> VectorField:
    """``A = i <n|grad n>`` by central differences of the gauge-fixed vectors.

    The discarded imaginary part (exactly zero in the continuum) is stored
    on the returned field as ``imag_residue``.
    """
    g = bundle.grid
    comps, masks, residue = [], [], 0.0
    valid = bundle.valid
    for a in range(3):
        d = diff(bundle.vectors, a, g.spacing[a], g.periodic[a])
        z = 1j * _inner(bundle.vectors, d)
        m = diff_mask(valid, a, g.periodic[a])
        if np.any(m):
            residue = max(residue, float(np.max(np.abs(z.imag[m]))))
        comps.append(z.real)
        masks.append(m)
    mask = masks[0] & masks[1] & masks[2]
    A = VectorField(g, np.stack(comps, axis=-1), mask, "A_n", "1/parameter")
    A.imag_residue = residue
    return A


def scalar_potential_eigenstate(bundle) -> ScalarField:
    """``Phi = -i <n|d_t n>``; identically zero without a time axis."""
    g = bundle.grid
    if g.nt < 3:
        return ScalarField(g, np.zeros(g.full_shape), bundle.valid, "Phi_n", "energy/hbar")
    d = diff(bundle.vectors, 3, g.dt, False)
    z = -1j * _inner(bundle.vectors, d)
    m = diff_mask(bundle.valid, 3, False)
    Phi = ScalarField(g, z.real, m, "Phi_n", "energy/hbar")
    Phi.imag_residue = float(np.max(np.abs(z.imag[m]))) if np.any(m) else 0.0
    return Phi


def eigenstate_potential(bundle) -> GaugePotential:
    A = connection_eigenstate(bundle)
    Phi = scalar_potential_eigenstate(bundle)
    res = max(A.imag_residue, getattr(Phi, "imag_residue", 0.0))
    return GaugePotential(A, Phi, "eigenstate", imag_residue=res)


def geometric_phase(bundle, Phi=None) -> GeometricPhase:
    """``gamma = -int_0^t Phi dt'`` with ``gamma(t=0) = 0``."""
    g = bundle.grid
    if Phi is None:
        Phi = scalar_potential_eigenstate(bundle)
    if g.nt < 2:
        return GeometricPhase(ScalarField(g, np.zeros(g.full_shape), Phi.mask, "gamma", "rad"))
    gam = -cumulative_time_integral(Phi)
    gam.name, gam.units = "gamma", "rad"
    return GeometricPhase(gam)


def potentials_full_wavefunction(bundle, hbar=1.0, t_ref=1.0, eigen=None) -> GaugePotential:
    """Potentials of the full adiabatic state ``exp(-i/hbar int e dt' + i gamma)|n>``.

    With a time axis: ``A_psi = -grad gamma + int_0^t grad e dt' / hbar + A_n``
    and ``Phi_psi = -e / hbar``. Without one the state is evaluated at the
    single time ``t_ref``: ``A_psi = t_ref grad e / hbar + A_n``, and the
    exact time derivative ``grad e / hbar`` is carried as ``dA_dt``.
    """
    g = bundle.grid
    eigen = eigenstate_potential(bundle) if eigen is None else eigen
    eps = bundle.energies
    Phi_psi = eps * (-1.0 / hbar)
    Phi_psi.name, Phi_psi.units = "Phi_psi", "energy/hbar"
    grad_e = gradient_field(eps) * (1.0 / hbar)
    if g.nt >= 3:
        gamma = geometric_phase(bundle, eigen.Phi).gamma
        A = -gradient_field(gamma) + cumulative_time_integral(grad_e) + eigen.A
        dA_dt = None
    else:
        A = grad_e * t_ref + eigen.A
        dA_dt = grad_e
    A.name, A.units = "A_psi", "1/parameter"
    return GaugePotential(A, Phi_psi, "full_wavefunction", dA_dt=dA_dt, hbar=hbar)


# ---------------------------------------------------------------------------
# curvatures


def electric_curvature(potential: GaugePotential) -> VectorField:
    """``Omega = -grad Phi - d_t A`` with the grid's difference operators.

    Without a usable time axis ``d_t A`` is taken from ``potential.dA_dt``
    when present and is zero otherwise.
    """
    g = potential.A.grid
    out = -gradient_field(potential.Phi)
    if potential.dA_dt is not None:
        out = out - potential.dA_dt
    elif g.nt >= 3:
        out = out - partial(potential.A, 3)
    out.name = "Omega_psi" if potential.source == "full_wavefunction" else "Omega_n"
    out.units = "1/(parameter time)"
    return out


def magnetic_curvature(potential: GaugePotential) -> VectorField:
    B = curl_field(potential.A)
    B.name = "B_psi" if potential.source == "full_wavefunction" else "B_n"
    B.units = "1/parameter^2"
    return B


def _aligned(w, c):
    return w * _unit_phase(_inner(c, w))[..., None]


def covariant_derivative(vectors, valid, grid, axis):
    """Gauge-covariant derivative of a vector field of states along one axis.

    Neighbours are phase-aligned to the centre node before differencing and
    the component along the centre state is projected out, so the result
    transforms as ``exp(i Lambda) D`` under any node-wise gauge change.
    Returns ``(D, mask)``.
    """
    if axis == 3:
        h, per = grid.dt, False
        if grid.nt < 3:
            return np.zeros_like(vectors), valid.copy()
    else:
        h, per = grid.spacing[axis], grid.periodic[axis]
    f = np.moveaxis(vectors, axis, 0)
    n = f.shape[0]
    out = np.zeros_like(f)
    if n > 1:
        if per:
            out[...] = (_aligned(np.roll(f, -1, 0), f) - _aligned(np.roll(f, 1, 0), f)) / (2 * h)
        else:
            out[1:-1] = (_aligned(f[2:], f[1:-1]) - _aligned(f[:-2], f[1:-1])) / (2 * h)
            out[0] = (-3 * f[0] + 4 * _aligned(f[1], f[0]) - _aligned(f[2], f[0])) / (2 * h)
            out[-1] = (3 * f[-1] - 4 * _aligned(f[-2], f[-1]) + _aligned(f[-3], f[-1])) / (2 * h)
        out -= f * _inner(f, out)[..., None]
    D = np.moveaxis(out, 0, axis)
    mask = diff_mask(valid, axis, per) if n > 1 else valid.copy()
    return D, mask


def curvature_local(bundle) -> VectorField:
    """Gauge-invariant ``B_a = -Im eps_abc <D_b n|D_c n>`` from covariant derivatives.

    Unlike ``curl A`` this needs no globally smooth gauge, so it stays
    correct next to Dirac strings and across periodic seams.
    """
    g = bundle.grid
    D, masks = zip(*(covariant_derivative(bundle.vectors, bundle.valid, g, a) for a in range(3)))
    F = lambda a, b: -2.0 * np.imag(_inner(D[a], D[b]))
    vals = np.stack([F(1, 2), F(2, 0), F(0, 1)], axis=-1)
    return VectorField(g, vals, masks[0] & masks[1] & masks[2], "B_n", "1/parameter^2")


def electric_curvature_bilinear(bundle) -> VectorField:
    """``Omega_a = i(<d_a n|d_t n> - <d_t n|d_a n>) = -2 Im <D_a n|D_t n>``."""
    g = bundle.grid
    Dt, mt = covariant_derivative(bundle.vectors, bundle.valid, g, 3)
    comps, mask = [], mt
    for a in range(3):
        Da, ma = covariant_derivative(bundle.vectors, bundle.valid, g, a)
        comps.append(-2.0 * np.imag(_inner(Da, Dt)))
        mask = mask & ma
    return VectorField(g, np.stack(comps, axis=-1), mask, "Omega_n", "1/(parameter time)")


@dataclass
class SpectralData:
    """Gauge-invariant quantities from matrix elements of dH.

    ``grad_energy`` is the Hellmann-Feynman gradient ``<n|grad H|n>`` (not
    divided by hbar); ``B`` and ``Omega`` are the sum-over-states curvatures.
    """

    grad_energy: VectorField
    B: VectorField
    Omega: VectorField
    min_gap: float


def sum_over_states(bundle, check_gap=True) -> SpectralData:
    """Sum-over-states curvatures and exact energy gradients on the bundle's grid.

    ``F_ab = -2 Im sum_{m != n} <n|d_a H|m><m|d_b H|n> / (e_n - e_m)**2`` with
    ``b`` running over the three parameters and time.
    """
    fam, g, n = bundle.family, bundle.grid, bundle.band
    R, t = g.mesh()
    R = np.broadcast_to(R, g.full_shape + (3,))
    t = np.broadcast_to(t, g.full_shape)
    N = fam.dim
    valid = bundle.valid
    ge = np.zeros(g.full_shape + (3,))
    Bv = np.zeros(g.full_shape + (3,))
    Om = np.zeros(g.full_shape + (3,))
    min_gap = math.inf
    others = [m for m in range(N) if m != n]
    for tau in range(g.nt):
        V = bundle.eigenvectors[:, :, :, tau]
        w = bundle.eigenvalues[:, :, :, tau]
        dH = gradient_hamiltonian(fam, R[:, :, :, tau], t[:, :, :, tau])
        dT = time_derivative_hamiltonian(fam, R[:, :, :, tau], t[:, :, :, tau])
        vn = V[..., :, n]
        # row vectors <n|X and columns X|n> for every derivative X
        left = np.einsum("...i,...aij->...aj", np.conj(vn), dH)
        right = np.einsum("...aij,...j->...ai", dH, vn)
        ge[:, :, :, tau] = np.real(np.einsum("...ai,...i->...a", left, vn))
        tright = np.einsum("...ij,...j->...i", dT, vn)
        F = np.zeros(left.shape[:-2] + (3, 3))
        Ot = np.zeros(left.shape[:-2] + (3,))
        vt = valid[:, :, :, tau]
        for m in others:
            vm = V[..., :, m]
            gap = w[..., n] - w[..., m]
            if check_gap and np.any(vt):
                min_gap = min(min_gap, float(np.min(np.abs(gap[vt]))))
                if min_gap < bundle.gap_tol:
                    break
            with np.errstate(divide="ignore"):
                inv = np.where(vt, 1.0 / np.where(vt, gap, 1.0) ** 2, 0.0)
            nm = np.einsum("...ai,...i->...a", left, vm)  # <n|d_a H|m>
            mn = np.einsum("...i,...ai->...a", np.conj(vm), right)  # <m|d_a H|n>
            mt = np.sum(np.conj(vm) * tright, axis=-1)  # <m|d_t H|n>
            F += -2.0 * np.imag(nm[..., :, None] * mn[..., None, :]) * inv[..., None, None]
            Ot += -2.0 * np.imag(nm * mt[..., None]) * inv[..., None]
        if check_gap and min_gap < bundle.gap_tol:
            break
        Bv[:, :, :, tau] = np.stack([F[..., 1, 2], F[..., 2, 0], F[..., 0, 1]], axis=-1)
        Om[:, :, :, tau] = Ot
    if check_gap and min_gap < bundle.gap_tol:
        raise GapTooSmall(f"gap {min_gap:.3e} below gap_tol {bundle.gap_tol:.3e} at a valid node")
    return SpectralData(
        VectorField(g, ge, valid, "grad_e_exact", "energy/parameter"),
        VectorField(g, Bv, valid, "B_sos", "1/parameter^2"),
        VectorField(g, Om, valid, "Omega_sos", "1/(parameter time)"),
        min_gap)


def curvature_sum_over_states(bundle) -> VectorField:
    return sum_over_states(bundle).B


# ---------------------------------------------------------------------------
# holonomies


def holonomy_phase(states, closed=True):
    """``-arg prod <n_j|n_j+1>`` for a sequence of states (rows).

    With ``closed=True`` the link from the last state back to the first is
    included. The result is wrapped to ``(-pi, pi]``.
    """
    states = np.asarray(states, dtype=complex)
    nxt = np.roll(states, -1, axis=0) if closed else states[1:]
    cur = states if closed else states[:-1]
    links = _inner(cur, nxt)
    if np.any(np.abs(links) == 0):
        raise DegeneratePointOnLoop("orthogonal neighbouring states on the loop")
    # accumulate as a sum of link angles so long loops do not underflow
    total = math.fsum(np.angle(links))
    return float(-(math.remainder(total, 2 * math.pi)))


def wilson_loop_phase(bundle, loop, tau=0):
    """Holonomy of the band around a closed polyline of adjacent grid nodes.

    The loop lists node indices; a repeated final node is optional.
    """
    g = bundle.grid
    loop = [tuple(int(x) for x in p) for p in loop]
    if len(loop) > 1 and loop[-1] == loop[0]:
        loop = loop[:-1]
    for p, q in zip(loop, loop[1:] + loop[:1]):
        moved = [a for a in range(3) if p[a] != q[a]]
        if len(moved) != 1:
            raise NonAdjacentLoopPoints(f"{p} -> {q} is not a single grid step")
        a = moved[0]
        d = abs(q[a] - p[a])
        if not (d == 1 or (g.periodic[a] and d == g.shape[a] - 1)):
            raise NonAdjacentLoopPoints(f"{p} -> {q} is not a single grid step")
    for p in loop:
        if bundle.degeneracy_mask[p + (tau,)]:
            raise DegeneratePointOnLoop(f"loop passes through degenerate node {p}")
    states = np.array([bundle.vectors[p + (tau,)] for p in loop])
    return holonomy_phase(states, closed=True)


def berry_phase_along_path(family, points, band, t=0.0, gap_tol=1e-12):
    """Discrete Berry phase of ``band`` around a closed loop of parameter points."""
    H = evaluate_hamiltonian(family, np.asarray(points, dtype=float), t)
    w, V = jacobi_eigh(H)
    N = family.dim
    gaps = []
    if band > 0:
        gaps.append(w[:, band] - w[:, band - 1])
    if band < N - 1:
        gaps.append(w[:, band + 1] - w[:, band])
    if gaps and np.min(np.minimum.reduce(gaps)) < gap_tol:
        raise DegeneratePointOnLoop("loop passes through a degeneracy")
    return holonomy_phase(V[:, :, band], closed=True)


def plaquette_curvature(bundle, axes=(0, 1), index=None, tau=0):
    """Lattice field strength ``F = -arg(U01 U12 U23 U30)`` on each plaquette.

    ``axes`` picks the plane; ``index`` fixes the remaining spatial axis
    (default 0). Periodic axes wrap, giving as many plaquettes as nodes.
    Returns an array of plaquette angles in ``(-pi, pi]``.
    """
    g = bundle.grid
    a, b = axes
    c = 3 - a - b
    sl = [slice(None)] * 3
    sl[c] = 0 if index is None else index
    V = bundle.vectors[tuple(sl) + (tau,)]
    M = bundle.degeneracy_mask[tuple(sl) + (tau,)]
    if a > b:
        V = np.swapaxes(V, 0, 1)
        M = M.T
    if np.any(M):
        raise DegeneratePointOnLoop("plaquette plane contains degenerate nodes")

    def shift(X, da, db):
        return np.roll(np.roll(X, -da, axis=0), -db, axis=1)

    v00, v10, v11, v01 = V, shift(V, 1, 0), shift(V, 1, 1), shift(V, 0, 1)
    prod = _inner(v00, v10) * _inner(v10, v11) * _inner(v11, v01) * _inner(v01, v00)
    F = -np.angle(prod)
    if not g.periodic[a]:
        F = F[:-1]
    if not g.periodic[b]:
        F = F[:, :-1]
    return F


def chern_number(bundle, axes=(0, 1), index=None, tau=0):
    F = plaquette_curvature(bundle, axes, index, tau)
    return math.fsum(F.ravel()) / (2 * math.pi)

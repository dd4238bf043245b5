"""Berry-Maxwell observables and the identity verification suite.

Everything here is computed from one :class:`EigenBundle`. The class
:class:`BerryMaxwell` caches the shared intermediate fields so the suite
builds each of them once; the module-level functions are thin wrappers
for one-off use.

Residuals are compared with a *noise floor*: the largest discrete curl of
the exact energy gradient ``<n|grad H|n>/hbar`` over the evaluation
region. The continuum curl is zero, so this measures the truncation error
of the curl stencil on the model's own energy surface at this resolution.
An identity passes when its max residual is at most
``multiplier * floor + atol``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from . import __version__
from .berry import (CONVENTIONS, GaugePotential, curvature_local, eigenstate_potential, gauge_seams,
                    electric_curvature, electric_curvature_bilinear, gauge_transform_apply,
                    geometric_phase, magnetic_curvature, potentials_full_wavefunction,
                    sum_over_states, chern_number)
from .errors import SurfaceOffGrid, SurfaceTouchesDegeneracy
from .grid import (BoxSurface, PlaneSurface, ScalarField, VectorField, cumulative_time_integral,
                   curl_field, diff, divergence_field, gradient_field, line_integral, partial,
                   surface_flux)

RESIDUAL_MULTIPLIER = 10.0
ROUNDOFF_ATOL = 1e-9
EVAL_MARGIN = 2
PURE_GAUGE_STEP = 1e-6


@dataclass
class ResidualStat:
    name: str
    max_abs: float
    l2: float
    valid_points: int
    noise_floor: float
    exceeds_floor: bool
    tolerance: float
    passed: bool
    description: str = ""


@dataclass
class VerificationReport:
    model: dict
    grid: dict
    band: int
    conventions: dict
    tolerances: dict
    residuals: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.residuals)

    def get(self, name):
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "version": __version__,
            "model": self.model,
            "grid": self.grid,
            "band": self.band,
            "conventions": self.conventions,
            "tolerances": self.tolerances,
            "residuals": [asdict(r) for r in self.residuals],
            "pass": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def evaluation_region(grid, margin=EVAL_MARGIN):
    """Nodes at least ``margin`` steps from every non-periodic edge.

    One-sided edge stencils nested inside another derivative drop to first
    order, so identity residuals are summarised away from the boundary.
    """
    region = np.ones(grid.full_shape, dtype=bool)
    for axis, n in enumerate(grid.full_shape):
        periodic = grid.periodic[axis] if axis < 3 else False
        if n == 1 or periodic:
            continue
        sl = [slice(None)] * 4
        m = min(margin, (n - 1) // 2)
        sl[axis] = slice(0, m)
        region[tuple(sl)] = False
        sl[axis] = slice(n - m, n)
        region[tuple(sl)] = False
    return region


def residual_stat(name, F, region, floor, multiplier=RESIDUAL_MULTIPLIER, atol=ROUNDOFF_ATOL,
                  description="", tolerance=None):
    """Summarise ``|F|`` over ``region & F.mask`` against the noise floor."""
    m = region & F.mask
    mag = np.abs(F.magnitude())[m]
    count = int(mag.size)
    max_abs = float(mag.max()) if count else 0.0
    l2 = math.sqrt(math.fsum((mag * mag).tolist()) / count) if count else 0.0
    if tolerance is None:
        tolerance = multiplier * floor + atol
    return ResidualStat(name, max_abs, l2, count, float(floor), bool(max_abs > floor),
                        float(tolerance), bool(max_abs <= tolerance), description)


def _zeros(grid, like, name=""):
    shape = like.values.shape
    return like.replace(np.zeros(shape), name=name)


def _dt(F):
    """Time derivative, or zero when the grid has no usable time axis."""
    if F.grid.nt >= 3:
        return partial(F, 3)
    return _zeros(F.grid, F)


@dataclass(frozen=True)
class TrigGauge:
    """Smooth gauge function ``Lambda = sum_i a_i sin(k_i . R + c_i t + p_i)``."""

    amplitudes: tuple
    wavevectors: tuple
    rates: tuple
    phases: tuple

    def _arg(self, R, t, i):
        return np.asarray(R) @ np.asarray(self.wavevectors[i], dtype=float) \
            + self.rates[i] * np.asarray(t) + self.phases[i]

    def __call__(self, R, t):
        return sum(a * np.sin(self._arg(R, t, i)) for i, a in enumerate(self.amplitudes))

    def grad(self, R, t):
        return sum((a * np.cos(self._arg(R, t, i)))[..., None] * np.asarray(self.wavevectors[i])
                   for i, a in enumerate(self.amplitudes))

    def dt(self, R, t):
        return sum(a * self.rates[i] * np.cos(self._arg(R, t, i))
                   for i, a in enumerate(self.amplitudes))

    @classmethod
    def random(cls, rng, grid, terms=3, timed=True, max_mode=1):
        """Low-order random trigonometric gauge, single valued on periodic axes."""
        amps, ks, rates, phases = [], [], [], []
        for _ in range(terms):
            k = []
            for a in range(3):
                n, h = grid.shape[a], grid.spacing[a]
                if n == 1:
                    k.append(0.0)
                    continue
                # whole periods on periodic axes, half waves across open ones
                length = n * h if grid.periodic[a] else 2 * (n - 1) * h
                k.append(2 * math.pi * int(rng.integers(-max_mode, max_mode + 1)) / length)
            ks.append(tuple(k))
            amps.append(float(rng.normal(0.0, 0.3)))
            rates.append(float(rng.normal()) if (timed and grid.has_time) else 0.0)
            phases.append(float(rng.uniform(0, 2 * math.pi)))
        return cls(tuple(amps), tuple(ks), tuple(rates), tuple(phases))


def default_gauge(grid):
    return TrigGauge.random(np.random.default_rng(20240531), grid)


class BerryMaxwell:
    """Lazily computed Berry-Maxwell fields of one bundle.

    ``flip_electric`` negates the eigenstate electric curvature on both of
    its routes; it exists only as a negative control for the suite.
    """

    def __init__(self, bundle, hbar=1.0, margin=EVAL_MARGIN, flip_electric=False):
        self.bundle = bundle
        self.grid = bundle.grid
        self.hbar = float(hbar)
        self.margin = margin
        self.flip_electric = flip_electric

    # potentials and curvatures -------------------------------------------

    @cached_property
    def eigen(self) -> GaugePotential:
        return eigenstate_potential(self.bundle)

    @cached_property
    def full(self) -> GaugePotential:
        return potentials_full_wavefunction(self.bundle, self.hbar, eigen=self.eigen)

    @cached_property
    def gamma(self):
        return geometric_phase(self.bundle, self.eigen.Phi).gamma

    @cached_property
    def Omega_n(self):
        out = electric_curvature(self.eigen)
        return -out if self.flip_electric else out

    @cached_property
    def Omega_bilinear(self):
        out = electric_curvature_bilinear(self.bundle)
        return -out if self.flip_electric else out

    @cached_property
    def Omega_psi(self):
        return electric_curvature(self.full)

    @cached_property
    def B_n(self):
        # a torus with nonzero Chern number admits no smooth periodic gauge,
        # so curl A would carry the seam; use the covariant form there
        if any(self.grid.periodic):
            return curvature_local(self.bundle)
        return magnetic_curvature(self.eigen)

    @cached_property
    def B_psi(self):
        return magnetic_curvature(self.full)

    @cached_property
    def spectral(self):
        return sum_over_states(self.bundle)

    # observables ------------------------------------------------------------

    @cached_property
    def grad_energy(self):
        """Finite-difference ``grad e / hbar``."""
        return gradient_field(self.bundle.energies) * (1.0 / self.hbar)

    @cached_property
    def velocity(self):
        out = self.spectral.grad_energy * (1.0 / self.hbar) - self.spectral.Omega
        out.name, out.units = "v_n", "parameter/time"
        return out

    @cached_property
    def hellmann_feynman_velocity(self):
        return self.spectral.grad_energy * (1.0 / self.hbar)

    @cached_property
    def vorticity(self):
        out = curl_field(self.velocity)
        out.name = "vorticity"
        return out

    @cached_property
    def monopole_current_potential(self):
        """``J_m = curl grad Phi_n``."""
        return curl_field(gradient_field(self.eigen.Phi))

    @cached_property
    def monopole_current_velocity(self):
        """``J_m = curl v - d_t B_n``."""
        return self.vorticity - _dt(self.B_n)

    @cached_property
    def electric_charge(self):
        return divergence_field(self.Omega_n)

    @cached_property
    def magnetic_charge(self):
        return divergence_field(self.B_n)

    @cached_property
    def polarization(self):
        return self.grad_energy - self.velocity

    @cached_property
    def region(self):
        return evaluation_region(self.grid, self.margin)

    @cached_property
    def noise_floor(self):
        F = curl_field(self.spectral.grad_energy * (1.0 / self.hbar))
        m = self.region & F.mask
        return float(np.abs(F.magnitude())[m].max()) if np.any(m) else 0.0

    # identity residual fields ----------------------------------------------

    def electric_full_vs_eigenstate(self):
        return self.Omega_psi - self.Omega_n

    def b_psi_relation(self):
        # a relation between curls of potentials, so it uses curl A_n even on
        # a torus and skips gauge seams
        out = self.B_psi - magnetic_curvature(self.eigen)
        if self.grid.nt >= 3:
            out = out - curl_field(cumulative_time_integral(gradient_field(self.eigen.Phi)))
        return out.replace(mask=out.mask & ~gauge_seams(self.bundle))

    def hellmann_feynman(self):
        return self.velocity - self.grad_energy + self.Omega_n

    def electric_routes(self):
        return self.Omega_n - self.Omega_bilinear

    def faraday(self):
        return curl_field(self.Omega_bilinear) + _dt(self.B_n) + self.monopole_current_potential

    def vorticity_identity(self):
        return self.vorticity - _dt(self.B_n) - self.monopole_current_potential

    def monopole_current_routes(self):
        return self.monopole_current_velocity - self.monopole_current_potential

    def continuity(self):
        return (divergence_field(self.vorticity) - _dt(self.magnetic_charge)
                - divergence_field(self.monopole_current_potential))

    def polarization_identity(self):
        return divergence_field(self.polarization) - self.electric_charge

    def magnetic_current_surface(self, surface):
        """Magnetic current through an open grid rectangle by two routes.

        Returns ``(I_loop, I_flux)`` per time sample: the rim circulation of
        ``v`` minus the time derivative of the ``B_n`` flux, and the flux of
        ``curl v - d_t B_n`` through the same rectangle.
        """
        loop = surface.boundary_loop()
        nt = self.grid.nt
        circ = np.array([line_integral(self.velocity, loop, tau) for tau in range(nt)])
        flux_b = np.array([surface_flux(self.B_n, surface, tau) for tau in range(nt)])
        dflux = diff(flux_b, 0, self.grid.dt, False) if nt >= 3 else np.zeros(nt)
        I_loop = circ - dflux
        I_flux = np.array([surface_flux(self.monopole_current_velocity, surface, tau)
                           for tau in range(nt)])
        return I_loop, I_flux


def _default_rectangle(ctx):
    """A mid-grid rectangle normal to a non-trivial axis whose nodes are all valid."""
    g = ctx.grid
    J = ctx.monopole_current_velocity
    axes = [a for a in (2, 0, 1) if g.shape[a] > 1 and
            all(g.shape[b] > 1 for b in ((a + 1) % 3, (a + 2) % 3))]
    plane_axes = axes or [a for a in (2, 0, 1) if g.shape[a] == 1]
    m = ctx.margin
    for a in plane_axes:
        b, c = (a + 1) % 3, (a + 2) % 3
        if g.shape[b] - 2 * m < 2 or g.shape[c] - 2 * m < 2:
            continue
        lo = (m, m)
        hi = (g.shape[b] - 1 - m, g.shape[c] - 1 - m)
        centre = g.shape[a] // 2
        order = sorted(range(g.shape[a]), key=lambda i: (abs(i - centre), i))
        for idx in order:
            if g.shape[a] > 1 and not (m <= idx < g.shape[a] - m):
                continue
            sl = [None, None, None]
            sl[a] = idx
            sl[b] = slice(lo[0], hi[0] + 1)
            sl[c] = slice(lo[1], hi[1] + 1)
            if np.all(J.mask[tuple(sl)]) and np.all(ctx.velocity.mask[tuple(sl)]):
                return PlaneSurface(a, idx, lo, hi, 1)
    return None


def _surface_stat(ctx, multiplier, atol):
    surf = _default_rectangle(ctx)
    desc = "rim circulation of v minus d_t flux(B_n) vs flux of (curl v - d_t B_n), per unit area"
    if surf is None:
        return ResidualStat("magnetic_current_surface", 0.0, 0.0, 0, ctx.noise_floor, False,
                            multiplier * ctx.noise_floor + atol, True,
                            desc + " (no fully valid rectangle; skipped)")
    I_loop, I_flux = ctx.magnetic_current_surface(surf)
    g = ctx.grid
    b, c = surf.inplane
    area = (surf.hi[0] - surf.lo[0]) * g.spacing[b] * (surf.hi[1] - surf.lo[1]) * g.spacing[c]
    diffs = np.abs(I_loop - I_flux) / area
    tmask = np.ones(g.nt, dtype=bool)
    if g.nt >= 3:
        tm = min(ctx.margin, (g.nt - 1) // 2)
        tmask[:tm] = False
        tmask[g.nt - tm:] = False
    vals = diffs[tmask]
    max_abs = float(vals.max())
    l2 = math.sqrt(math.fsum((vals * vals).tolist()) / vals.size)
    tol = multiplier * ctx.noise_floor + atol
    return ResidualStat("magnetic_current_surface", max_abs, l2, int(vals.size), ctx.noise_floor,
                        bool(max_abs > ctx.noise_floor), tol, bool(max_abs <= tol), desc)


def pure_gauge_error(ctx, gauge):
    """Discretisation error of the package's operators on the phase ``exp(i Lambda)`` alone.

    For that one-component state the exact connection is ``-grad Lambda``,
    the exact scalar potential ``d_t Lambda`` and both curvatures vanish, so
    the returned maximum deviation measures how well this grid resolves the
    gauge function itself.
    """
    from dataclasses import replace
    g = ctx.grid
    R, t = g.mesh()
    R = np.broadcast_to(R, g.full_shape + (3,))
    t = np.broadcast_to(t, g.full_shape)
    phase = np.exp(1j * gauge(R, t))[..., None]
    pure = BerryMaxwell(replace(ctx.bundle, vectors=phase), ctx.hbar, ctx.margin)
    # reference derivatives come from Lambda itself, not from gauge.grad or
    # gauge.dt, so a wrong analytic derivative cannot widen the tolerance
    step = PURE_GAUGE_STEP
    comps = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        comps.append((gauge(R + e, t) - gauge(R - e, t)) / (2 * step))
    glam = VectorField(g, np.stack(comps, axis=-1))
    tlam = ScalarField(g, (gauge(R, t + step) - gauge(R, t - step)) / (2 * step))
    errs = [(pure.eigen.A + glam).max_abs(ctx.region),
            (pure.eigen.Phi - tlam).max_abs(ctx.region),
            pure.B_n.max_abs(ctx.region),
            electric_curvature(pure.eigen).max_abs(ctx.region)]
    return max(errs)


# compared only away from gauge seams: built from differences of the potentials
GAUGE_DEPENDENT = ("A_shift", "Phi_shift", "B_n", "Omega_n", "magnetic_charge", "gamma_shift")


def gauge_residuals(ctx, gauge, multiplier=RESIDUAL_MULTIPLIER, atol=ROUNDOFF_ATOL):
    """Compare the bundle with its transform under ``gauge``.

    Returns ``(stat, parts)`` where ``parts`` maps each compared quantity to
    its max deviation. The tolerance is ``multiplier`` times the noise floor
    plus :func:`pure_gauge_error`.
    """
    g = ctx.grid
    R, t = g.mesh()
    R = np.broadcast_to(R, g.full_shape + (3,))
    t = np.broadcast_to(t, g.full_shape)
    lam = ScalarField(g, gauge(R, t))
    glam = VectorField(g, gauge.grad(R, t))
    tlam = ScalarField(g, gauge.dt(R, t))
    other = BerryMaxwell(gauge_transform_apply(ctx.bundle, gauge), ctx.hbar, ctx.margin,
                         ctx.flip_electric)
    tol = multiplier * (ctx.noise_floor + pure_gauge_error(ctx, gauge)) + atol
    # potentials are only comparable where the reference gauge is smooth
    smooth = ctx.region & ~gauge_seams(ctx.bundle)
    lam0 = lam.replace(np.broadcast_to(lam.values[:, :, :, :1], lam.values.shape))
    fields = {
        "A_shift": other.eigen.A - ctx.eigen.A + glam,
        "Phi_shift": other.eigen.Phi - ctx.eigen.Phi - tlam,
        "B_n": other.B_n - ctx.B_n,
        "Omega_n": other.Omega_n - ctx.Omega_n,
        "Omega_bilinear": other.Omega_bilinear - ctx.Omega_bilinear,
        "velocity": other.velocity - ctx.velocity,
        "magnetic_charge": other.magnetic_charge - ctx.magnetic_charge,
        "gamma_shift": other.gamma - ctx.gamma + lam - lam0,
    }
    regions = {k: (smooth if k in GAUGE_DEPENDENT else ctx.region) for k in fields}
    parts = {k: F.max_abs(regions[k]) for k, F in fields.items()}
    worst = max(parts, key=parts.get)
    stat = residual_stat("gauge_invariance", fields[worst], regions[worst], ctx.noise_floor,
                         tolerance=tol,
                         description="curvatures, velocity and charges unchanged; A shifts by "
                                     "-grad Lambda, Phi by +d_t Lambda, gamma by -Lambda(t)+Lambda(0)"
                                     f" (worst: {worst})")
    return stat, parts


SUITE = (
    ("electric_full_vs_eigenstate", "Omega_psi - Omega_n (zero Omega_psi when static)"),
    ("b_psi_relation", "B_psi - B_n - curl int_0^t grad Phi_n dt'"),
    ("hellmann_feynman", "v - grad e/hbar + Omega_n"),
    ("electric_routes", "Omega_n (-grad Phi - d_t A) minus bilinear -2 Im<D n|D_t n>"),
    ("faraday", "curl Omega_n + d_t B_n + curl grad Phi_n"),
    ("monopole_current_floor", "|curl grad Phi_n| on smooth regions"),
    ("vorticity", "curl v - d_t B_n - curl grad Phi_n"),
    ("monopole_current_routes", "(curl v - d_t B_n) - curl grad Phi_n"),
    ("continuity", "div(curl v) - d_t div B_n - div curl grad Phi_n"),
    ("polarization", "div(grad e/hbar - v) - div Omega_n"),
    ("magnetic_charge_smooth", "div B_n away from degeneracies"),
)


def run_verification_suite(family, grid, band, hbar=1.0, gap_tol=None, herm_tol=None,
                           multiplier=RESIDUAL_MULTIPLIER, atol=ROUNDOFF_ATOL,
                           margin=EVAL_MARGIN, flip_electric=False, bundle=None,
                           gauge=None) -> VerificationReport:
    """Evaluate every identity on one model and grid.

    ``bundle`` may be passed to reuse an existing eigenbundle; ``gauge``
    overrides the fixed pseudo-random gauge used for the invariance check.
    """
    from .berry import build_eigenbundle
    if bundle is None:
        bundle = build_eigenbundle(family, grid, band, gap_tol=gap_tol, herm_tol=herm_tol)
    ctx = BerryMaxwell(bundle, hbar, margin, flip_electric)
    floor = ctx.noise_floor
    fields = {
        "electric_full_vs_eigenstate": ctx.electric_full_vs_eigenstate,
        "b_psi_relation": ctx.b_psi_relation,
        "hellmann_feynman": ctx.hellmann_feynman,
        "electric_routes": ctx.electric_routes,
        "faraday": ctx.faraday,
        "monopole_current_floor": lambda: ctx.monopole_current_potential,
        "vorticity": ctx.vorticity_identity,
        "monopole_current_routes": ctx.monopole_current_routes,
        "continuity": ctx.continuity,
        "polarization": ctx.polarization_identity,
        "magnetic_charge_smooth": lambda: ctx.magnetic_charge,
    }
    stats = [residual_stat(name, fields[name](), ctx.region, floor, multiplier, atol, desc)
             for name, desc in SUITE]
    stats.append(_surface_stat(ctx, multiplier, atol))
    gauge = default_gauge(grid) if gauge is None else gauge
    stats.append(gauge_residuals(ctx, gauge, multiplier, atol)[0])

    conventions = dict(CONVENTIONS)
    conventions["noise_floor"] = ("max |curl(<n|grad H|n>/hbar)| over nodes at least "
                                  f"{margin} steps from non-periodic edges")
    conventions["imag_residue_A_Phi"] = ctx.eigen.imag_residue
    return VerificationReport(
        model={"name": family.name, "dim": family.dim, "params": dict(family.params)},
        grid=grid.describe(),
        band=int(band),
        conventions=conventions,
        tolerances={"residual_multiplier": multiplier, "roundoff_atol": atol,
                    "gap_tol": bundle.gap_tol, "hbar": hbar, "margin": margin,
                    "noise_floor": floor, "flip_electric_curvature": bool(flip_electric)},
        residuals=stats)


# ---------------------------------------------------------------------------
# one-off wrappers


def velocity_field(bundle, hbar=1.0):
    return BerryMaxwell(bundle, hbar).velocity


def hellmann_feynman_residual(bundle, hbar=1.0):
    ctx = BerryMaxwell(bundle, hbar)
    return residual_stat("hellmann_feynman", ctx.hellmann_feynman(), ctx.region, ctx.noise_floor)


def faraday_residual(bundle, hbar=1.0):
    ctx = BerryMaxwell(bundle, hbar)
    return residual_stat("faraday", ctx.faraday(), ctx.region, ctx.noise_floor)


def vorticity_field(bundle, hbar=1.0):
    return BerryMaxwell(bundle, hbar).vorticity


def electric_charge_density(bundle):
    return BerryMaxwell(bundle).electric_charge


def polarization_density(bundle, hbar=1.0):
    return BerryMaxwell(bundle, hbar).polarization


def magnetic_charge_density(bundle):
    return BerryMaxwell(bundle).magnetic_charge


def monopole_current_density(bundle, hbar=1.0):
    """Both routes: ``(curl grad Phi_n, curl v - d_t B_n)``."""
    ctx = BerryMaxwell(bundle, hbar)
    return ctx.monopole_current_potential, ctx.monopole_current_velocity


def continuity_residual(bundle, hbar=1.0):
    ctx = BerryMaxwell(bundle, hbar)
    return residual_stat("continuity", ctx.continuity(), ctx.region, ctx.noise_floor)


def magnetic_current_surface(bundle, surface, hbar=1.0):
    return BerryMaxwell(bundle, hbar).magnetic_current_surface(surface)


# ---------------------------------------------------------------------------
# monopoles


@dataclass
class MonopoleCharge:
    charge: float
    quantization_error: float


def monopole_charge(B, surface, tau=0) -> MonopoleCharge:
    """Flux of ``B`` out of a closed box divided by ``2 pi``."""
    q = surface_flux(B, surface, tau) / (2 * math.pi)
    return MonopoleCharge(q, abs(q - round(q)))


def find_monopoles(bundle, half_width=10, tau=0):
    """Enclosing-box charges of every connected cluster of degenerate nodes.

    Flux is taken of the gauge-invariant local curvature, which is well
    defined right up to the masked cluster. Clusters whose box would leave
    the grid or cross other masked nodes are reported with ``charge=None``.
    """
    g = bundle.grid
    deg = bundle.degeneracy_mask[:, :, :, tau]
    labels, count = ndimage.label(deg)
    B = curvature_local(bundle)
    out = []
    for lab in range(1, count + 1):
        idx = np.argwhere(labels == lab)
        centre = [float(x) for x in idx.mean(axis=0)]
        c = [int(round(x)) for x in centre]
        lo = [c[a] - half_width for a in range(3)]
        hi = [c[a] + half_width for a in range(3)]
        lo = [max(lo[a], 0) for a in range(3)]
        hi = [min(hi[a], g.shape[a] - 1) for a in range(3)]
        coord = [g.origin[a] + g.spacing[a] * centre[a] for a in range(3)]
        entry = {"center": coord, "center_index": centre, "box": [lo, hi], "cells": int(len(idx))}
        enclosed = all(lo[a] < idx[:, a].min() and idx[:, a].max() < hi[a] for a in range(3))
        try:
            if not enclosed:
                raise SurfaceOffGrid("cluster touches the grid boundary")
            mc = monopole_charge(B, BoxSurface(tuple(lo), tuple(hi)), tau)
            entry.update(charge=mc.charge, quantization_error=mc.quantization_error)
        except (SurfaceOffGrid, SurfaceTouchesDegeneracy) as exc:
            entry.update(charge=None, quantization_error=None, note=str(exc))
        out.append(entry)
    return out


def lattice_chern(bundle, tau=0):
    """Plaquette Chern number over the periodic plane of the grid."""
    g = bundle.grid
    axes = tuple(a for a in range(3) if g.periodic[a])
    if len(axes) < 2:
        raise SurfaceOffGrid("lattice Chern number needs two periodic axes")
    C = chern_number(bundle, axes[:2], 0, tau)
    return MonopoleCharge(C, abs(C - round(C)))


# ---------------------------------------------------------------------------
# curvature cross-check


def _relative_gap(X, Y, select):
    """Largest ``|X - Y| / |Y|`` over ``select``; nan when nothing is selected."""
    if not np.any(select):
        return float("nan")
    num = np.linalg.norm(X - Y, axis=-1)[select]
    den = np.linalg.norm(Y, axis=-1)[select]
    return float(np.max(num / den))


def curvature_cross_check(bundle, rel_floor=0.1, gap_factor=10.0, margin=EVAL_MARGIN, tau=0):
    """Relative disagreement between independent routes to the magnetic curvature.

    The sum-over-states curvature is the reference. Compared routes are the
    curl of the finite-difference connection, the covariant local form and,
    on grids with two periodic axes, plaquette angles divided by the cell
    area (reference evaluated at plaquette centres). Only nodes where the
    reference magnitude exceeds ``rel_floor`` times its maximum and the gap
    exceeds ``gap_factor * gap_tol`` are compared.

    Returns a dict of route name to max pointwise relative error, plus the
    number of compared nodes under ``"points"``.
    """
    from .berry import build_eigenbundle, plaquette_curvature
    g = bundle.grid
    n = bundle.band
    w = bundle.eigenvalues[:, :, :, tau]
    gap = np.full(g.shape, np.inf)
    if n > 0:
        gap = np.minimum(gap, w[..., n] - w[..., n - 1])
    if n < bundle.family.dim - 1:
        gap = np.minimum(gap, w[..., n + 1] - w[..., n])
    ref = sum_over_states(bundle).B
    Bref = ref.values[:, :, :, tau]
    mag = np.linalg.norm(Bref, axis=-1)
    region = evaluation_region(g, margin)[:, :, :, tau]
    base = region & bundle.valid[:, :, :, tau] & (gap > gap_factor * bundle.gap_tol)
    base &= mag > rel_floor * float(mag[base].max()) if np.any(base) else base
    out = {}
    routes = {"local": curvature_local(bundle)}
    if not any(g.periodic):
        routes["curl"] = magnetic_curvature(eigenstate_potential(bundle))
    for name, B in routes.items():
        sel = base & B.mask[:, :, :, tau]
        out[name] = _relative_gap(B.values[:, :, :, tau], Bref, sel)
    out["points"] = int(np.count_nonzero(base))
    axes = tuple(a for a in range(3) if g.periodic[a])
    if len(axes) >= 2:
        a, b = axes[:2]
        c = 3 - a - b
        F = plaquette_curvature(bundle, (a, b), 0, tau) / (g.spacing[a] * g.spacing[b])
        origin = list(g.origin)
        origin[a] += 0.5 * g.spacing[a]
        origin[b] += 0.5 * g.spacing[b]
        shifted = type(g)(tuple(origin), g.spacing, g.shape, g.periodic, g.time)
        centre = build_eigenbundle(bundle.family, shifted, n, gap_tol=bundle.gap_tol)
        Bc = sum_over_states(centre).B.values[:, :, :, tau][..., c]
        sl = [slice(None)] * 3
        sl[c] = 0
        Bc = Bc[tuple(sl)]
        if a > b:
            Bc = Bc.T
        sel = np.abs(Bc) > rel_floor * np.abs(Bc).max()
        out["plaquette"] = _relative_gap(F[..., None], Bc[..., None], sel)
    return out

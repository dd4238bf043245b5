"""Registry of parameterised Hamiltonian families H(R, t).

Families are vectorised: ``evaluate(R, t)`` takes ``R`` of shape (..., 3)
and ``t`` broadcastable to ``R.shape[:-1]`` and returns (..., N, N)
matrices. Optional analytic derivatives follow the same convention with
``grad`` returning (..., 3, N, N).

New families are added with :func:`register_family`, passing a factory
that turns keyword parameters into a :class:`HamiltonianFamily`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteInput, UnknownFamily, ValidationError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

FD_STEP = 1e-5


@dataclass(frozen=True)
class HamiltonianFamily:
    name: str
    dim: int
    evaluate: Callable
    grad: Optional[Callable] = None
    dt: Optional[Callable] = None
    static: bool = False
    params: dict = field(default_factory=dict)
    default_grid: Optional[dict] = None


_REGISTRY: dict[str, Callable[..., HamiltonianFamily]] = {}


def register_family(name, factory):
    """Register ``factory(**params) -> HamiltonianFamily`` under ``name``.

    Meant for the single-threaded setup phase; re-registering replaces.
    """
    _REGISTRY[name] = factory
    return factory


def available_families():
    return sorted(_REGISTRY)


def get_family(name, **params) -> HamiltonianFamily:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownFamily(f"unknown Hamiltonian family {name!r}; "
                            f"known: {', '.join(available_families())}") from None
    return factory(**params)


def _prepare(R, t):
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    if R.shape[-1:] != (3,):
        raise ValueError(f"R must have a trailing axis of length 3, got {R.shape}")
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
        raise NonFiniteInput("non-finite parameter or time")
    t = np.broadcast_to(t, np.broadcast_shapes(R.shape[:-1], t.shape))
    R = np.broadcast_to(R, t.shape + (3,))
    return R, t


def evaluate_hamiltonian(family, R, t=0.0):
    R, t = _prepare(R, t)
    return family.evaluate(R, t)


def gradient_hamiltonian(family, R, t=0.0, h_fd=None):
    """dH/dR_a stacked on axis -3: shape (..., 3, N, N).

    Uses the family's analytic gradient when it has one, otherwise central
    differences with step ``h_fd`` (default 1e-5).
    """
    R, t = _prepare(R, t)
    if family.grad is not None and h_fd is None:
        return family.grad(R, t)
    h = FD_STEP if h_fd is None else h_fd
    out = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        out.append((family.evaluate(R + e, t) - family.evaluate(R - e, t)) / (2 * h))
    return np.stack(out, axis=-3)


def time_derivative_hamiltonian(family, R, t=0.0, h_fd=None):
    R, t = _prepare(R, t)
    if family.dt is not None and h_fd is None:
        return family.dt(R, t)
    if family.static:
        return np.zeros(R.shape[:-1] + (family.dim, family.dim), dtype=complex)
    h = FD_STEP if h_fd is None else h_fd
    return (family.evaluate(R, t + h) - family.evaluate(R, t - h)) / (2 * h)


def pauli_dot(vec):
    """vec . sigma for vec of shape (..., 3)."""
    return np.einsum("...a,aij->...ij", np.asarray(vec, dtype=complex), PAULI)


# ---------------------------------------------------------------------------
# built-in families


def _no_extra(name, extra):
    if extra:
        key = sorted(extra)[0]
        raise ValidationError(f"unknown parameter {key!r} for family {name!r}", key=key)


def spin_zeeman(**extra):
    """H = R . sigma; static, with a Berry monopole at R = 0."""
    _no_extra("spin-zeeman", extra)

    def evaluate(R, t):
        return pauli_dot(R)

    def grad(R, t):
        return np.broadcast_to(PAULI, R.shape[:-1] + (3, 2, 2)).copy()

    def dt(R, t):
        return np.zeros(R.shape[:-1] + (2, 2), dtype=complex)

    return HamiltonianFamily(
        "spin-zeeman", 2, evaluate, grad, dt, static=True,
        default_grid={"origin": [0.5, -0.5, -0.5], "spacing": [0.05, 0.05, 0.05],
                      "shape": [21, 21, 21]})


def rotating_two_level(B0=1.0, theta=math.pi / 3, omega=1.0, phi0=0.0, **extra):
    """A field of strength B0 at polar angle theta precessing about z at rate omega.

    The grid coordinate R is a static probe field added to the drive:
    ``H(R, t) = (R + b(t)) . sigma`` with
    ``b(t) = B0 (sin(theta) cos(omega t + phi0), sin(theta) sin(omega t + phi0), cos(theta))``.
    At R = 0 this is the bare precessing two-level system; away from it the
    degeneracy sits at R = -b(t) and moves on a circle, so the Berry
    curvature over the R grid is genuinely time dependent.
    """
    _no_extra("rotating-two-level", extra)
    B0, theta, omega, phi0 = float(B0), float(theta), float(omega), float(phi0)

    def drive(t):
        ph = omega * t + phi0
        return B0 * np.stack([math.sin(theta) * np.cos(ph),
                              math.sin(theta) * np.sin(ph),
                              math.cos(theta) * np.ones_like(ph)], axis=-1)

    def drive_rate(t):
        ph = omega * t + phi0
        return B0 * omega * math.sin(theta) * np.stack(
            [-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)

    def evaluate(R, t):
        return pauli_dot(R + drive(t))

    def grad(R, t):
        return np.broadcast_to(PAULI, R.shape[:-1] + (3, 2, 2)).copy()

    def dt(R, t):
        return pauli_dot(drive_rate(t) + 0.0 * R)

    half = 0.25 * B0
    period = 2 * math.pi / abs(omega) if omega else 1.0
    return HamiltonianFamily(
        "rotating-two-level", 2, evaluate, grad, dt, static=False,
        params={"B0": B0, "theta": theta, "omega": omega, "phi0": phi0},
        default_grid={"origin": [-half] * 3, "spacing": [2 * half / 20] * 3,
                      "shape": [21, 21, 21],
                      "time": {"t0": 0.0, "span": period, "nt": 200}})


def two_band_lattice(m=1.0, **extra):
    """H(q) = sin qx sx + sin qy sy + (m - cos qx - cos qy) sz; q_z is ignored."""
    _no_extra("two-band-lattice", extra)
    m = float(m)

    def evaluate(R, t):
        qx, qy = R[..., 0], R[..., 1]
        d = np.stack([np.sin(qx), np.sin(qy), m - np.cos(qx) - np.cos(qy)], axis=-1)
        return pauli_dot(d)

    def grad(R, t):
        qx, qy = R[..., 0], R[..., 1]
        z = np.zeros_like(qx)
        dx = np.stack([np.cos(qx), z, np.sin(qx)], axis=-1)
        dy = np.stack([z, np.cos(qy), np.sin(qy)], axis=-1)
        return np.stack([pauli_dot(dx), pauli_dot(dy), pauli_dot(np.zeros_like(dx))], axis=-3)

    def dt(R, t):
        return np.zeros(R.shape[:-1] + (2, 2), dtype=complex)

    n = 60
    return HamiltonianFamily(
        "two-band-lattice", 2, evaluate, grad, dt, static=True, params={"m": m},
        default_grid={"origin": [0.0, 0.0, 0.0], "spacing": [2 * math.pi / n, 2 * math.pi / n, 1.0],
                      "shape": [n, n, 1], "periodic": [True, True, False]})


def _poly_eval(terms, R):
    out = np.zeros(R.shape[:-1])
    for coef, px, py, pz in terms:
        out = out + coef * R[..., 0] ** px * R[..., 1] ** py * R[..., 2] ** pz
    return out


def _poly_grad(terms, R, axis):
    out = np.zeros(R.shape[:-1])
    for coef, *powers in terms:
        p = powers[axis]
        if p == 0:
            continue
        pw = list(powers)
        pw[axis] = p - 1
        out = out + coef * p * R[..., 0] ** pw[0] * R[..., 1] ** pw[1] * R[..., 2] ** pw[2]
    return out


def static_diagonal(polynomials=None, N=None, **extra):
    """H = diag(f_1(R), ..., f_N(R)) with polynomial entries.

    ``polynomials`` holds one list of ``[coef, px, py, pz]`` monomials per
    diagonal entry; the default is ``f = (x**2, 0)``.
    """
    _no_extra("static-diagonal", extra)
    if polynomials is None:
        polynomials = [[[1.0, 2, 0, 0]], []]
    polys = []
    for k, terms in enumerate(polynomials):
        clean = []
        for term in terms:
            if len(term) != 4:
                raise ValidationError(f"monomial {term!r} of entry {k} needs [coef, px, py, pz]",
                                      key="polynomials")
            coef, px, py, pz = term
            if min(px, py, pz) < 0 or any(int(p) != p for p in (px, py, pz)):
                raise ValidationError("monomial powers must be non-negative integers",
                                      key="polynomials")
            clean.append((float(coef), int(px), int(py), int(pz)))
        polys.append(clean)
    dim = len(polys)
    if dim < 1:
        raise ValidationError("static-diagonal needs at least one entry", key="polynomials")
    if N is not None and int(N) != dim:
        raise ValidationError(f"N={N} does not match {dim} polynomial entries", key="N")
    eye = np.eye(dim)

    def evaluate(R, t):
        diag = np.stack([_poly_eval(p, R) for p in polys], axis=-1)
        return (diag[..., :, None] * eye).astype(complex)

    def grad(R, t):
        comps = []
        for a in range(3):
            d = np.stack([_poly_grad(p, R, a) for p in polys], axis=-1)
            comps.append((d[..., :, None] * eye).astype(complex))
        return np.stack(comps, axis=-3)

    def dt(R, t):
        return np.zeros(R.shape[:-1] + (dim, dim), dtype=complex)

    return HamiltonianFamily(
        "static-diagonal", dim, evaluate, grad, dt, static=True,
        params={"polynomials": [[list(t) for t in p] for p in polys]},
        default_grid={"origin": [0.5, -0.5, -0.5], "spacing": [0.05, 0.05, 0.05],
                      "shape": [21, 21, 21]})


register_family("spin-zeeman", spin_zeeman)
register_family("rotating-two-level", rotating_two_level)
register_family("two-band-lattice", two_band_lattice)
register_family("static-diagonal", static_diagonal)

"""Uniform (R, t) grids, node-collocated fields and discrete vector calculus.

Every field lives on the nodes of a rectilinear 3D parameter grid with an
optional uniform time axis, so arrays are always indexed ``(i, j, k, tau)``
(``nt = 1`` when there is no time axis). Derivatives are second order:
central in the interior, one-sided three-point at non-periodic edges and
wrap-around on periodic axes. An axis with a single node is "trivial" and
differentiates to zero.

Masks are boolean arrays with True meaning *valid*. Derivative operators
invalidate a node whenever any node of its stencil (itself included) is
invalid, so output masks never grow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (AxisTooShort, DegeneratePointOnLoop, NonAdjacentLoopPoints,
                     SurfaceOffGrid, SurfaceTouchesDegeneracy)


@dataclass(frozen=True)
class TimeAxis:
    t0: float
    dt: float
    nt: int

    def __post_init__(self):
        if self.nt < 1:
            raise AxisTooShort(f"time axis needs at least one sample, got nt={self.nt}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)


@dataclass(frozen=True)
class ParameterGrid:
    origin: tuple
    spacing: tuple
    shape: tuple
    periodic: tuple = (False, False, False)
    time: TimeAxis | None = None

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "spacing", tuple(float(x) for x in self.spacing))
        object.__setattr__(self, "shape", tuple(int(x) for x in self.shape))
        object.__setattr__(self, "periodic", tuple(bool(x) for x in self.periodic))
        if not (len(self.origin) == len(self.spacing) == len(self.shape) == len(self.periodic) == 3):
            raise ValueError("origin, spacing, shape and periodic must all have 3 entries")
        for a in range(3):
            if not self.spacing[a] > 0:
                raise ValueError(f"spacing[{a}] must be positive, got {self.spacing[a]}")
            n = self.shape[a]
            if n < 1 or (n < 3 and n != 1):
                raise AxisTooShort(
                    f"axis {a} has {n} points; non-trivial axes need at least 3")
            if self.periodic[a] and n < 3:
                raise AxisTooShort(f"periodic axis {a} needs at least 3 points")

    @property
    def nt(self):
        return 1 if self.time is None else self.time.nt

    @property
    def has_time(self):
        return self.time is not None

    @property
    def full_shape(self):
        return self.shape + (self.nt,)

    @property
    def dt(self):
        return None if self.time is None else self.time.dt

    @property
    def size(self):
        return int(np.prod(self.full_shape))

    def nontrivial_axes(self):
        return [a for a in range(3) if self.shape[a] > 1]

    def axis_values(self, axis):
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def times(self):
        return np.zeros(1) if self.time is None else self.time.times()

    def points(self):
        """Node coordinates, shape (n1, n2, n3, 3)."""
        xs = np.meshgrid(*(self.axis_values(a) for a in range(3)), indexing="ij")
        return np.stack(xs, axis=-1)

    def mesh(self):
        """Broadcastable (R, t) arrays: R of shape (n1, n2, n3, 1, 3), t of shape (1, 1, 1, nt)."""
        R = self.points()[:, :, :, None, :]
        t = self.times()[None, None, None, :]
        return R, t

    def refined(self, space=True, time=True):
        """Grid with halved spacing (and/or time step) over the same extent."""
        shape, spacing = list(self.shape), list(self.spacing)
        if space:
            for a in range(3):
                if shape[a] > 1:
                    spacing[a] /= 2.0
                    shape[a] = 2 * shape[a] if self.periodic[a] else 2 * (shape[a] - 1) + 1
        tax = self.time
        if time and tax is not None and tax.nt > 1:
            tax = TimeAxis(tax.t0, tax.dt / 2.0, 2 * (tax.nt - 1) + 1)
        return replace(self, shape=tuple(shape), spacing=tuple(spacing), time=tax)

    def describe(self):
        out = {
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "shape": list(self.shape),
            "periodic": list(self.periodic),
            "time": None,
        }
        if self.time is not None:
            out["time"] = {"t0": self.time.t0, "dt": self.time.dt, "nt": self.time.nt}
        return out


@dataclass
class Field:
    """Node values plus a validity mask on a ParameterGrid.

    Values at invalid nodes are replaced by zero on construction so that
    stencils touching them stay finite (their outputs are masked anyway).
    """

    grid: ParameterGrid
    values: np.ndarray
    mask: np.ndarray = None
    name: str = ""
    units: str = ""
    ncomp = 1

    def __post_init__(self):
        shape = self.grid.full_shape
        values = np.asarray(self.values, dtype=float)
        expected = shape if self.ncomp == 1 else shape + (self.ncomp,)
        values = np.broadcast_to(values, expected)
        mask = np.ones(shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        mask = np.broadcast_to(mask, shape)
        m = mask if self.ncomp == 1 else mask[..., None]
        bad = ~np.isfinite(values) & m
        if np.any(bad):
            raise ValueError(f"field {self.name!r} has non-finite values at valid nodes")
        self.values = np.where(m, values, 0.0)
        self.mask = mask.copy()

    def replace(self, values=None, mask=None, name=None, units=None):
        return type(self)(self.grid,
                          self.values if values is None else values,
                          self.mask if mask is None else mask,
                          self.name if name is None else name,
                          self.units if units is None else units)

    def _binary(self, other, op):
        if isinstance(other, Field):
            if type(other) is not type(self):
                raise TypeError("cannot combine scalar and vector fields")
            return self.replace(op(self.values, other.values), self.mask & other.mask, name="")
        return self.replace(op(self.values, other), name="")

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return self.replace(-self.values)

    def magnitude(self):
        return self.values if self.ncomp == 1 else np.sqrt(np.sum(self.values ** 2, axis=-1))

    def max_abs(self, region=None):
        region = self.mask if region is None else region & self.mask
        mag = np.abs(self.magnitude())
        return float(mag[region].max()) if np.any(region) else 0.0


class ScalarField(Field):
    ncomp = 1


class VectorField(Field):
    ncomp = 3

    def component(self, a):
        return ScalarField(self.grid, self.values[..., a], self.mask, f"{self.name}[{a}]", self.units)

    @classmethod
    def from_components(cls, comps, name="", units=""):
        grid = comps[0].grid
        mask = comps[0].mask & comps[1].mask & comps[2].mask
        return cls(grid, np.stack([c.values for c in comps], axis=-1), mask, name, units)


# ---------------------------------------------------------------------------
# stencils


def diff(values, axis, h, periodic=False):
    """Second-order first derivative of ``values`` along ``axis``.

    Works for real or complex arrays whose leading four axes are the grid
    axes; trailing axes are carried along.
    """
    f = np.moveaxis(np.asarray(values), axis, 0)
    n = f.shape[0]
    out = np.empty_like(f)
    if n == 1:
        out[...] = 0
    elif periodic:
        out[...] = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * h)
    else:
        if n < 3:
            raise AxisTooShort(f"axis {axis} has {n} points; need at least 3")
        out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def diff_mask(mask, axis, periodic=False):
    m = np.moveaxis(np.asarray(mask, dtype=bool), axis, 0)
    n = m.shape[0]
    if n == 1:
        return np.moveaxis(m.copy(), 0, axis)
    out = m.copy()
    if periodic:
        out &= np.roll(m, -1, axis=0) & np.roll(m, 1, axis=0)
    else:
        out[1:-1] &= m[2:] & m[:-2]
        out[0] &= m[1] & m[2]
        out[-1] &= m[-2] & m[-3]
    return np.moveaxis(out, 0, axis)


def partial(f: Field, axis):
    """Derivative of a scalar or vector field along grid axis 0-2 or time (3)."""
    g = f.grid
    if axis == 3:
        if g.nt < 3:
            raise AxisTooShort(f"time derivative needs nt >= 3, got nt={g.nt}")
        h, per = g.dt, False
    else:
        h, per = g.spacing[axis], g.periodic[axis]
    return f.replace(diff(f.values, axis, h, per), diff_mask(f.mask, axis, per), name="")


def gradient_field(f: ScalarField) -> VectorField:
    comps = [partial(f, a) for a in range(3)]
    return VectorField.from_components(comps, name=f"grad({f.name})")


def curl_field(F: VectorField) -> VectorField:
    d = {}
    masks = F.mask.copy()
    g = F.grid
    for a in range(3):
        d[a] = diff(F.values, a, g.spacing[a], g.periodic[a])
        masks &= diff_mask(F.mask, a, g.periodic[a])
    out = np.stack([
        d[1][..., 2] - d[2][..., 1],
        d[2][..., 0] - d[0][..., 2],
        d[0][..., 1] - d[1][..., 0],
    ], axis=-1)
    return VectorField(g, out, masks, f"curl({F.name})", F.units)


def divergence_field(F: VectorField) -> ScalarField:
    g = F.grid
    mask = F.mask.copy()
    total = np.zeros(g.full_shape)
    for a in range(3):
        total = total + diff(F.values[..., a], a, g.spacing[a], g.periodic[a])
        mask &= diff_mask(F.mask, a, g.periodic[a])
    return ScalarField(g, total, mask, f"div({F.name})", F.units)


def time_derivative_field(f: Field) -> Field:
    out = partial(f, 3)
    out.name = f"dt({f.name})"
    return out


def cumulative_time_integral(f: Field) -> Field:
    """Running trapezoid integral from the first time sample, zero at tau=0.

    Accumulation runs left to right with Kahan compensation, so results do
    not depend on how the surrounding computation is parallelised.
    """
    g = f.grid
    if g.nt < 2:
        raise AxisTooShort(f"time integral needs nt >= 2, got nt={g.nt}")
    v = np.moveaxis(f.values, 3, 0)
    out = np.zeros_like(v)
    total = np.zeros_like(v[0])
    comp = np.zeros_like(v[0])
    half = 0.5 * g.dt
    for k in range(1, v.shape[0]):
        y = half * (v[k - 1] + v[k]) - comp
        s = total + y
        comp = (s - total) - y
        total = s
        out[k] = total
    mask = np.logical_and.accumulate(f.mask, axis=3)
    return f.replace(np.moveaxis(out, 0, 3), mask, name=f"int_dt({f.name})")


# ---------------------------------------------------------------------------
# surfaces and loops


@dataclass(frozen=True)
class PlaneSurface:
    """Open rectangle on the grid plane ``index`` of ``axis``.

    ``lo``/``hi`` bound the two in-plane axes taken in cyclic order
    ``(axis+1, axis+2)``. The normal is ``orientation * e_axis`` and the rim
    runs counter-clockwise about it.
    """

    axis: int
    index: int
    lo: tuple
    hi: tuple
    orientation: int = 1

    @property
    def inplane(self):
        return ((self.axis + 1) % 3, (self.axis + 2) % 3)

    def boundary_loop(self):
        b, c = self.inplane
        (b0, c0), (b1, c1) = self.lo, self.hi

        def node(ib, ic):
            p = [0, 0, 0]
            p[self.axis], p[b], p[c] = self.index, ib, ic
            return tuple(p)

        ring = ([node(i, c0) for i in range(b0, b1)]
                + [node(b1, j) for j in range(c0, c1)]
                + [node(i, c1) for i in range(b1, b0, -1)]
                + [node(b0, j) for j in range(c1, c0, -1)])
        ring.append(ring[0])
        if self.orientation < 0:
            ring.reverse()
        return ring


@dataclass(frozen=True)
class BoxSurface:
    """Closed surface of the index box ``lo..hi`` (inclusive), normals outward."""

    lo: tuple
    hi: tuple

    def faces(self):
        out = []
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            lo2 = (self.lo[b], self.lo[c])
            hi2 = (self.hi[b], self.hi[c])
            out.append(PlaneSurface(a, self.lo[a], lo2, hi2, -1))
            out.append(PlaneSurface(a, self.hi[a], lo2, hi2, +1))
        return out

    def contains(self, idx):
        return all(self.lo[a] < idx[a] < self.hi[a] for a in range(3))


def _check_face(grid, face: PlaneSurface):
    b, c = face.inplane
    if not 0 <= face.index < grid.shape[face.axis]:
        raise SurfaceOffGrid(f"plane index {face.index} outside axis {face.axis}")
    for ax, lo, hi in ((b, face.lo[0], face.hi[0]), (c, face.lo[1], face.hi[1])):
        if not (0 <= lo < hi < grid.shape[ax]):
            raise SurfaceOffGrid(f"face bounds {lo}..{hi} invalid on axis {ax}")


def _face_terms(F: VectorField, face: PlaneSurface, tau):
    grid = F.grid
    _check_face(grid, face)
    b, c = face.inplane
    sl = [None, None, None]
    sl[face.axis] = face.index
    sl[b] = slice(face.lo[0], face.hi[0] + 1)
    sl[c] = slice(face.lo[1], face.hi[1] + 1)
    vals = F.values[sl[0], sl[1], sl[2], tau, face.axis]
    valid = F.mask[sl[0], sl[1], sl[2], tau]
    if not np.all(valid):
        raise SurfaceTouchesDegeneracy("surface crosses masked nodes")
    # numpy orders the two remaining (sliced) axes ascending; put them as (b, c)
    if b > c:
        vals = vals.T
    wb = np.full(face.hi[0] - face.lo[0] + 1, grid.spacing[b])
    wb[0] *= 0.5
    wb[-1] *= 0.5
    wc = np.full(face.hi[1] - face.lo[1] + 1, grid.spacing[c])
    wc[0] *= 0.5
    wc[-1] *= 0.5
    return (face.orientation * vals * wb[:, None] * wc[None, :]).ravel()


def surface_flux(F: VectorField, surface, tau=0) -> float:
    """Outward (or oriented) flux of F through a grid-aligned surface.

    Each cell contributes its area times the mean of its four corner values
    (the midpoint rule with node interpolation, i.e. the trapezoid rule);
    contributions are summed with ``math.fsum`` in a fixed order.
    """
    faces = surface.faces() if isinstance(surface, BoxSurface) else [surface]
    if isinstance(surface, BoxSurface):
        for a in range(3):
            if not (0 <= surface.lo[a] < surface.hi[a] < F.grid.shape[a]):
                raise SurfaceOffGrid(f"box bounds invalid on axis {a}")
    terms = [_face_terms(F, face, tau) for face in faces]
    return math.fsum(np.concatenate(terms))


def surface_flux_series(F: VectorField, surface) -> np.ndarray:
    return np.array([surface_flux(F, surface, tau) for tau in range(F.grid.nt)])


def _step(grid, p, q):
    """Signed displacement along the single axis where p and q differ."""
    moved = [a for a in range(3) if p[a] != q[a]]
    if len(moved) != 1:
        raise NonAdjacentLoopPoints(f"{p} -> {q} is not a single grid step")
    a = moved[0]
    d = q[a] - p[a]
    n = grid.shape[a]
    if grid.periodic[a] and abs(d) == n - 1:
        d = -int(np.sign(d))
    if abs(d) != 1:
        raise NonAdjacentLoopPoints(f"{p} -> {q} is not a single grid step")
    return a, d * grid.spacing[a]


def line_integral(F: VectorField, loop, tau=0) -> float:
    """Trapezoid line integral of F along a polyline of adjacent grid nodes.

    A loop is closed when its last node repeats the first; reversing the
    node order negates the result.
    """
    loop = [tuple(int(x) for x in p) for p in loop]
    grid = F.grid
    terms = []
    for p, q in zip(loop[:-1], loop[1:]):
        a, d = _step(grid, p, q)
        if not (F.mask[p + (tau,)] and F.mask[q + (tau,)]):
            raise DegeneratePointOnLoop(f"loop passes through masked node {p} or {q}")
        terms.append(0.5 * (F.values[p + (tau, a)] + F.values[q + (tau, a)]) * d)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# CSV dumps


def _fmt(x):
    return format(float(x), ".17g")


def write_field_csv(f: Field, path) -> Path:
    """Dump a field as CSV, one row per node, ``i`` slowest.

    Columns: ``i,j,k,tau,x,y,z,t,mask,c0[,c1,c2]`` with ``mask`` 1 for valid
    nodes; floats carry 17 significant digits so rows round-trip exactly.
    """
    g = f.grid
    path = Path(path)
    idx = np.indices(g.full_shape).reshape(4, -1).T
    R, t = g.mesh()
    coords = np.broadcast_to(R, g.full_shape + (3,)).reshape(-1, 3)
    times = np.broadcast_to(t, g.full_shape).reshape(-1)
    vals = f.values.reshape(g.size, -1)
    mask = f.mask.reshape(-1)
    ncomp = vals.shape[1]
    header = "i,j,k,tau,x,y,z,t,mask," + ",".join(f"c{c}" for c in range(ncomp))
    lines = [header]
    for r in range(g.size):
        cols = [str(v) for v in idx[r]]
        cols += [_fmt(x) for x in coords[r]]
        cols.append(_fmt(times[r]))
        cols.append("1" if mask[r] else "0")
        cols += [_fmt(x) for x in vals[r]]
        lines.append(",".join(cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field_csv(path):
    """Parse a dump written by :func:`write_field_csv` into plain arrays."""
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    return header, data

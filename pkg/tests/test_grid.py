import math

import numpy as np
import pytest

from berryfield.errors import (AxisTooShort, NonAdjacentLoopPoints, SurfaceOffGrid,
                               SurfaceTouchesDegeneracy)
from berryfield.grid import (BoxSurface, ParameterGrid, PlaneSurface, ScalarField, TimeAxis,
                             VectorField, cumulative_time_integral, curl_field, divergence_field,
                             gradient_field, line_integral, read_field_csv, surface_flux,
                             time_derivative_field, write_field_csv)


def cube(n=11, h=0.1, origin=-0.5, periodic=(False, False, False), time=None):
    return ParameterGrid((origin,) * 3, (h,) * 3, (n,) * 3, periodic, time)


def coords(g):
    R, t = g.mesh()
    R = np.broadcast_to(R, g.full_shape + (3,))
    return R[..., 0], R[..., 1], R[..., 2], np.broadcast_to(t, g.full_shape)


def test_grid_validation():
    with pytest.raises(AxisTooShort):
        ParameterGrid((0, 0, 0), (1, 1, 1), (2, 5, 5))
    with pytest.raises(ValueError):
        ParameterGrid((0, 0, 0), (0, 1, 1), (5, 5, 5))
    with pytest.raises(AxisTooShort):
        TimeAxis(0.0, 0.1, 0)
    g = ParameterGrid((0, 0, 0), (1, 1, 1), (5, 1, 5))
    assert g.full_shape == (5, 1, 5, 1)
    assert g.nontrivial_axes() == [0, 2]


def test_refined_keeps_extent():
    g = cube(time=TimeAxis(0.0, 0.5, 5))
    r = g.refined()
    assert r.shape == (21, 21, 21) and r.nt == 9
    assert r.axis_values(0)[-1] == pytest.approx(g.axis_values(0)[-1])
    assert r.times()[-1] == pytest.approx(g.times()[-1])
    p = cube(n=8, periodic=(True, False, False)).refined()
    assert p.shape[0] == 16


def test_gradient_constant_linear_quadratic():
    g = cube()
    x, y, z, _ = coords(g)
    assert gradient_field(ScalarField(g, np.full(g.full_shape, 3.0))).max_abs() == 0
    G = gradient_field(ScalarField(g, x))
    assert np.allclose(G.values, [1, 0, 0], atol=1e-13)
    G = gradient_field(ScalarField(g, x ** 2))
    # central and one-sided second-order stencils are exact on quadratics
    assert np.allclose(G.values[..., 0], 2 * x, atol=1e-13)


def test_gradient_periodic_wrap():
    n = 32
    g = ParameterGrid((0, 0, 0), (2 * math.pi / n, 1, 1), (n, 1, 1), (True, False, False))
    x = coords(g)[0]
    G = gradient_field(ScalarField(g, np.sin(x)))
    err = np.abs(G.values[..., 0] - np.cos(x)).max()
    assert err < (2 * math.pi / n) ** 2 / 6 * 1.01
    # wrap stencil touches no edge, so every node has the same error bound
    assert G.mask.all()


def test_mask_propagates_to_stencil_neighbours():
    g = cube()
    mask = np.ones(g.full_shape, bool)
    mask[5, 5, 5, 0] = False
    G = gradient_field(ScalarField(g, coords(g)[0], mask))
    assert not G.mask[4, 5, 5, 0] and not G.mask[5, 6, 5, 0]
    assert G.mask[3, 5, 5, 0] and G.mask[4, 4, 5, 0]


def test_curl_and_divergence_of_linear_fields():
    g = cube()
    x, y, z, _ = coords(g)
    C = curl_field(VectorField(g, np.stack([-y, x, 0 * x], -1)))
    assert np.allclose(C.values, [0, 0, 2], atol=1e-12)
    D = divergence_field(VectorField(g, np.stack([x, y, z], -1)))
    assert np.allclose(D.values, 3, atol=1e-12)


@pytest.mark.parametrize("n", [11, 21, 41])
def test_curl_grad_and_div_curl_vanish(n):
    # stencils along different axes commute on a tensor grid, edges included,
    # so these compositions vanish to roundoff rather than as O(h^2)
    g = cube(n=n, h=1.0 / (n - 1))
    x, y, z, _ = coords(g)
    f = ScalarField(g, np.sin(3 * x) * np.cos(2 * y) * np.exp(z))
    assert curl_field(gradient_field(f)).max_abs() < 1e-9
    F = VectorField(g, np.stack([np.sin(y * z), x * np.cos(z), np.exp(x * y)], -1))
    assert divergence_field(curl_field(F)).max_abs() < 1e-9


def test_second_order_convergence():
    errs = []
    for n in (11, 21, 41):
        g = cube(n=n, h=1.0 / (n - 1))
        x, y, _, _ = coords(g)
        G = gradient_field(ScalarField(g, np.sin(x) * np.cos(y)))
        errs.append(np.abs(G.values[..., 0] - np.cos(x) * np.cos(y)).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2))


def test_time_derivative():
    g = cube(n=3, time=TimeAxis(0.0, 0.05, 41))
    t = coords(g)[3]
    assert time_derivative_field(ScalarField(g, np.full(g.full_shape, 2.0))).max_abs() == 0
    assert np.allclose(time_derivative_field(ScalarField(g, 1.5 * t)).values, 1.5)
    errs = []
    for nt in (41, 81, 161):
        g = cube(n=3, time=TimeAxis(0.0, 2.0 / (nt - 1), nt))
        t = coords(g)[3]
        d = time_derivative_field(ScalarField(g, np.sin(2 * t)))
        errs.append(np.abs(d.values - 2 * np.cos(2 * t)).max())
    assert 3.6 < errs[0] / errs[1] < 4.4 and 3.6 < errs[1] / errs[2] < 4.4


def test_cumulative_time_integral():
    g = cube(n=3, time=TimeAxis(0.0, 0.1, 31))
    t = coords(g)[3]
    one = cumulative_time_integral(ScalarField(g, np.ones(g.full_shape)))
    assert np.allclose(one.values, t, atol=1e-14)
    lin = cumulative_time_integral(ScalarField(g, t))
    assert np.allclose(lin.values, t ** 2 / 2, atol=1e-14)
    w = 3.0
    c = cumulative_time_integral(ScalarField(g, np.cos(w * t)))
    assert np.abs(c.values - np.sin(w * t) / w).max() < 0.1 ** 2 * w
    with pytest.raises(AxisTooShort):
        cumulative_time_integral(ScalarField(cube(n=3), 1.0))


def test_flux_of_constant_through_box():
    g = cube()
    F = VectorField(g, np.array([1.0, 0, 0]))
    assert abs(surface_flux(F, BoxSurface((1, 1, 1), (9, 9, 9)))) < 1e-15


def test_gauss_law():
    g = cube(n=21, h=0.1, origin=-1.0)
    x, y, z, _ = coords(g)
    r2 = x ** 2 + y ** 2 + z ** 2
    mask = r2 > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        F = VectorField(g, np.stack([x, y, z], -1) / np.where(mask, r2 ** 1.5, 1)[..., None], mask)
    inside = surface_flux(F, BoxSurface((1, 1, 1), (19, 19, 19)))
    assert inside == pytest.approx(4 * math.pi, rel=0.02)
    outside = surface_flux(F, BoxSurface((12, 2, 2), (19, 18, 18)))
    assert abs(outside) < 0.02 * 4 * math.pi
    with pytest.raises(SurfaceTouchesDegeneracy):
        surface_flux(F, BoxSurface((10, 2, 2), (19, 18, 18)))
    with pytest.raises(SurfaceOffGrid):
        surface_flux(F, BoxSurface((1, 1, 1), (25, 9, 9)))


def test_line_integrals():
    g = cube(n=11, h=0.1, origin=0.0)
    x, y, _, _ = coords(g)
    const = VectorField(g, np.array([0.3, -1.0, 2.0]))
    loop = PlaneSurface(2, 0, (0, 0), (10, 10)).boundary_loop()
    assert abs(line_integral(const, loop)) < 1e-15
    swirl = VectorField(g, np.stack([-y, x, 0 * x], -1))
    assert line_integral(swirl, loop) == pytest.approx(2.0, abs=1e-13)
    assert line_integral(swirl, loop[::-1]) == pytest.approx(-2.0, abs=1e-13)
    with pytest.raises(NonAdjacentLoopPoints):
        line_integral(swirl, [(0, 0, 0), (1, 1, 0)])


def test_stokes_on_plane():
    g = cube(n=21, h=0.05, origin=0.0)
    x, y, z, _ = coords(g)
    F = VectorField(g, np.stack([np.sin(y), x * z, x ** 2], -1))
    face = PlaneSurface(2, 10, (2, 2), (18, 18))
    exact = 0.8 * 0.5 * 0.8 - 0.8 * (math.sin(0.9) - math.sin(0.1))
    assert surface_flux(curl_field(F), face) == pytest.approx(exact, rel=2e-3)
    assert line_integral(F, face.boundary_loop()) == pytest.approx(exact, rel=2e-3)


def test_field_csv_round_trip(tmp_path):
    g = cube(n=3, time=TimeAxis(0.0, 0.25, 3))
    rng = np.random.default_rng(5)
    mask = rng.random(g.full_shape) > 0.2
    F = VectorField(g, rng.normal(size=g.full_shape + (3,)), mask, "F")
    header, data = read_field_csv(write_field_csv(F, tmp_path / "F.csv"))
    assert header == "i,j,k,tau,x,y,z,t,mask,c0,c1,c2".split(",")
    assert data.shape == (g.size, 12)
    assert np.array_equal(data[:, 9:], F.values.reshape(-1, 3))
    assert np.array_equal(data[:, 8].astype(bool), mask.ravel())


def test_non_finite_valid_values_rejected():
    g = cube(n=3)
    vals = np.zeros(g.full_shape)
    vals[1, 1, 1, 0] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, vals)
    mask = np.ones(g.full_shape, bool)
    mask[1, 1, 1, 0] = False
    assert ScalarField(g, vals, mask).values[1, 1, 1, 0] == 0

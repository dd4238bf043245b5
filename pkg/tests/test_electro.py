import json
import math
from dataclasses import replace

import numpy as np
import pytest

from berryfield import ParameterGrid, build_eigenbundle, get_family
from berryfield.electro import (SUITE, BerryMaxwell, TrigGauge, curvature_cross_check,
                                default_gauge, evaluation_region, find_monopoles,
                                gauge_residuals, lattice_chern, monopole_charge,
                                pure_gauge_error, residual_stat, run_verification_suite)
from berryfield.errors import SurfaceOffGrid, SurfaceTouchesDegeneracy
from berryfield.grid import BoxSurface, PlaneSurface, ScalarField, TimeAxis

from conftest import small_rotating_grid


def test_evaluation_region():
    g = ParameterGrid((0, 0, 0), (1, 1, 1), (9, 1, 6), (False, False, True),
                      TimeAxis(0, 1, 7))
    r = evaluation_region(g, 2)
    assert r.shape == g.full_shape
    assert r[2:7, :, :, 2:5].all()
    assert not r[1].any() and not r[7].any()
    assert not r[..., 1].any() and not r[..., 5].any()
    # periodic and trivial axes keep every node
    assert r[4, 0, :, 3].all()


def test_residual_stat_counts_valid_points_only():
    g = ParameterGrid((0, 0, 0), (1, 1, 1), (3, 3, 3))
    vals = np.zeros(g.full_shape)
    vals[0, 0, 0, 0] = 5.0
    vals[1, 1, 1, 0] = 0.5
    mask = np.ones(g.full_shape, bool)
    mask[0, 0, 0, 0] = False
    F = ScalarField(g, vals, mask)
    st = residual_stat("x", F, np.ones(g.full_shape, bool), floor=0.1)
    assert st.max_abs == 0.5 and st.valid_points == 26
    assert st.l2 == pytest.approx(0.5 / math.sqrt(26))
    assert st.exceeds_floor and st.passed and st.tolerance == pytest.approx(1.0 + 1e-9)


def test_static_noise_floor_is_nonnegative(zeeman_ctx, diagonal_bundle):
    assert zeeman_ctx.noise_floor >= 0
    assert BerryMaxwell(diagonal_bundle).noise_floor == 0


def test_static_velocity(zeeman_ctx, diagonal_bundle):
    R = zeeman_ctx.grid.points()[..., None, :]
    rhat = R / np.linalg.norm(R, axis=-1, keepdims=True)
    assert np.allclose(zeeman_ctx.velocity.values, -rhat, atol=1e-14)
    ctx = BerryMaxwell(diagonal_bundle, hbar=0.5)
    x = diagonal_bundle.grid.points()[..., None, 0]
    assert np.allclose(ctx.velocity.values[..., 0], 2 * x / 0.5, atol=1e-13)


def test_static_identities(zeeman_ctx, diagonal_bundle):
    c = zeeman_ctx
    floor = c.noise_floor
    for F in (c.hellmann_feynman(), c.vorticity_identity(), c.faraday(),
              c.monopole_current_potential, c.monopole_current_velocity, c.electric_charge,
              c.magnetic_charge, c.continuity()):
        assert F.max_abs(c.region) <= floor + 1e-9
    # static polarization is the divergence of the stencil error of grad e
    assert c.polarization_identity().max_abs(c.region) <= 10 * floor
    d = BerryMaxwell(diagonal_bundle)
    assert d.vorticity.max_abs() < 1e-12
    assert d.electric_charge.max_abs() == 0
    assert d.polarization.max_abs() < 1e-12
    assert d.magnetic_charge.max_abs() == 0


def test_smooth_scalar_potential_has_no_monopole_current(rotating_small):
    # synthetic bundle whose only structure is a smooth phase in space and time
    g = rotating_small.grid
    R, t = g.mesh()
    phase = np.sin(2 * R[..., 0] * t) + R[..., 1] * R[..., 2] * np.cos(t)
    vec = np.exp(1j * phase)[..., None] * np.array([1, 0])
    ctx = BerryMaxwell(replace(rotating_small, vectors=vec))
    assert ctx.monopole_current_potential.max_abs() < 1e-10


def test_dynamic_identities(rotating_small_ctx):
    c = rotating_small_ctx
    tol = 10 * c.noise_floor
    assert c.noise_floor == pytest.approx(3.5052e-3, rel=1e-3)
    for name, F in (("hf", c.hellmann_feynman()), ("routes", c.electric_routes()),
                    ("faraday", c.faraday()), ("vort", c.vorticity_identity()),
                    ("jm", c.monopole_current_routes()), ("cont", c.continuity()),
                    ("pol", c.polarization_identity()),
                    ("opsi", c.electric_full_vs_eigenstate())):
        assert F.max_abs(c.region) <= tol, name


def test_b_psi_relation_is_exact(rotating_small_ctx):
    c = rotating_small_ctx
    assert c.b_psi_relation().max_abs(c.region) < 1e-10
    # the correction is a curl of a gradient, so without Dirac strings it vanishes
    assert (c.B_psi - c.B_n).max_abs(c.region) < 1e-10


def test_magnetic_current_surface(rotating_small_ctx, zeeman_ctx):
    c = rotating_small_ctx
    face = PlaneSurface(2, 5, (2, 2), (8, 8))
    loop, flux = c.magnetic_current_surface(face)
    assert loop.shape == flux.shape == (c.grid.nt,)
    inner = slice(2, -2)
    assert np.abs(loop - flux)[inner].max() < 10 * c.noise_floor * (6 * 0.05) ** 2
    rev_loop, rev_flux = c.magnetic_current_surface(replace(face, orientation=-1))
    assert np.allclose(rev_loop, -loop) and np.allclose(rev_flux, -flux)
    s_loop, s_flux = zeeman_ctx.magnetic_current_surface(PlaneSurface(0, 10, (3, 3), (15, 15)))
    assert abs(s_loop[0]) < 1e-9 and abs(s_flux[0]) < 1e-9


def test_suite_lists_every_identity_once():
    names = [n for n, _ in SUITE]
    assert len(names) == len(set(names)) == 11


def test_static_suite_passes(zeeman_bundle):
    fam = zeeman_bundle.family
    report = run_verification_suite(fam, zeeman_bundle.grid, 0, bundle=zeeman_bundle)
    assert report.passed
    names = [r.name for r in report.residuals]
    assert len(names) == len(set(names)) == 13
    data = json.loads(report.to_json())
    assert set(data) == {"version", "model", "grid", "band", "conventions", "tolerances",
                         "residuals", "pass"}
    assert set(data["residuals"][0]) == {"name", "max_abs", "l2", "valid_points", "noise_floor",
                                         "exceeds_floor", "tolerance", "passed", "description"}


def test_flipped_curvature_fails(rotating_small):
    fam = rotating_small.family
    report = run_verification_suite(fam, rotating_small.grid, 0, bundle=rotating_small,
                                    flip_electric=True)
    assert not report.passed
    for name in ("electric_full_vs_eigenstate", "hellmann_feynman", "faraday"):
        assert not report.get(name).passed


def test_gauge_residuals(rotating_small_ctx):
    c = rotating_small_ctx
    rng = np.random.default_rng(1)
    gauge = TrigGauge.random(rng, c.grid)
    stat, parts = gauge_residuals(c, gauge)
    assert stat.passed
    assert set(parts) >= {"A_shift", "Phi_shift", "B_n", "Omega_n", "velocity", "gamma_shift"}
    # the velocity does not touch the eigenvectors at all
    assert parts["velocity"] < 1e-12
    assert 0 < pure_gauge_error(c, gauge) < 1


def test_gauge_check_catches_wrong_shift(rotating_small_ctx):
    c = rotating_small_ctx

    class Wrong(TrigGauge):
        def grad(self, R, t):
            return -super().grad(R, t)

    good = TrigGauge.random(np.random.default_rng(2), c.grid)
    bad = Wrong(good.amplitudes, good.wavevectors, good.rates, good.phases)
    stat, parts = gauge_residuals(c, bad)
    assert not stat.passed
    assert max(parts, key=parts.get) == "A_shift"


def test_default_gauge_is_reproducible(rotating_small):
    a = default_gauge(rotating_small.grid)
    b = default_gauge(rotating_small.grid)
    R, t = rotating_small.grid.mesh()
    assert np.array_equal(a(R, t), b(R, t))


def test_monopole_charge_and_search():
    fam = get_family("spin-zeeman")
    g = ParameterGrid((-1.0,) * 3, (0.1,) * 3, (21,) * 3)
    b = build_eigenbundle(fam, g, 0)
    found = find_monopoles(b, half_width=8)
    assert len(found) == 1
    m = found[0]
    assert m["center_index"] == [10.0, 10.0, 10.0]
    assert abs(m["charge"] - 1) < 0.03 and m["quantization_error"] < 0.03
    ctx = BerryMaxwell(b)
    from berryfield.berry import curvature_local
    B = curvature_local(b)
    assert abs(monopole_charge(B, BoxSurface((12, 2, 2), (19, 18, 18))).charge) < 0.03
    with pytest.raises(SurfaceTouchesDegeneracy):
        monopole_charge(B, BoxSurface((10, 2, 2), (19, 18, 18)))
    # upper band carries the opposite charge
    up = find_monopoles(build_eigenbundle(fam, g, 1), half_width=8)
    assert abs(up[0]["charge"] + 1) < 0.03


def test_no_monopole_off_origin(zeeman_bundle):
    assert find_monopoles(zeeman_bundle) == []


def test_monopole_near_edge_reported_without_charge():
    fam = get_family("spin-zeeman")
    g = ParameterGrid((-0.1, -1.0, -1.0), (0.1,) * 3, (11, 21, 21))
    found = find_monopoles(build_eigenbundle(fam, g, 0), half_width=5)
    assert len(found) == 1 and found[0]["charge"] is None


def test_lattice_chern(lattice_bundle, zeeman_bundle):
    mc = lattice_chern(lattice_bundle)
    assert abs(mc.charge + 1) < 1e-6 and mc.quantization_error < 1e-6
    with pytest.raises(SurfaceOffGrid):
        lattice_chern(zeeman_bundle)


def test_cross_check_routes(zeeman_bundle, lattice_bundle):
    z = curvature_cross_check(zeeman_bundle)
    assert z["curl"] < 0.05 and z["local"] < 0.05 and z["points"] > 1000
    lat = curvature_cross_check(lattice_bundle)
    assert lat["plaquette"] < 0.05 and lat["local"] < 0.05
    # frozen from the 60x60 mesh
    assert lat["plaquette"] == pytest.approx(3.531e-3, rel=1e-2)

"""Command-line front end: ``berryfield fields|verify|monopole|sweep --config PATH``.

Exit status is 0 when every requested check passes and all files were
written, 1 when a check fails, and 2 for configuration or computation
errors (with a message on stderr).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .berry import CONVENTIONS, build_eigenbundle
from .config import RunConfig, load_config, validate_sweep
from .electro import SUITE, BerryMaxwell, evaluation_region, find_monopoles, lattice_chern
from .electro import run_verification_suite
from .errors import BerryFieldError
from .grid import ScalarField, curl_field, write_field_csv

log = logging.getLogger("berryfield")

FIELD_FILES = ("A_n", "Phi_n", "A_psi", "Phi_psi", "Omega_n", "B_n", "B_psi", "gamma", "v_n")


def _dump_json(obj, path):
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _bundle(cfg: RunConfig):
    t = cfg.tolerances
    return build_eigenbundle(cfg.family(), cfg.grid, cfg.band, gap_tol=t.gap_tol,
                             herm_tol=t.herm_tol, overlap_floor=t.overlap_floor)


def _header(cfg):
    fam = cfg.family()
    return {"tool": "berryfield", "version": __version__, "config_sha256": cfg.source_sha256,
            "model": {"name": fam.name, "dim": fam.dim, "params": dict(fam.params)},
            "grid": cfg.grid.describe(), "band": cfg.band}


def cmd_fields(cfg: RunConfig, out: Path) -> int:
    ctx = BerryMaxwell(_bundle(cfg), cfg.hbar, cfg.tolerances.margin)
    g = cfg.grid
    gamma = ctx.gamma if g.has_time else ScalarField(g, np.zeros(g.full_shape), ctx.bundle.valid,
                                                     "gamma", "rad")
    fields = {
        "A_n": ctx.eigen.A, "Phi_n": ctx.eigen.Phi, "A_psi": ctx.full.A, "Phi_psi": ctx.full.Phi,
        "Omega_n": ctx.Omega_n, "B_n": ctx.B_n, "B_psi": ctx.B_psi, "gamma": gamma,
        "v_n": ctx.velocity,
    }
    files = []
    for name in FIELD_FILES:
        path = write_field_csv(fields[name], out / f"{name}.csv")
        files.append({"name": name, "file": path.name, "units": fields[name].units,
                      "components": fields[name].ncomp, "sha256": _sha256(path)})
        log.info("wrote %s", path)
    manifest = dict(_header(cfg), command="fields", conventions=dict(CONVENTIONS), hbar=cfg.hbar,
                    files=files)
    _dump_json(manifest, out / "manifest.json")
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    t = cfg.tolerances
    report = run_verification_suite(cfg.family(), cfg.grid, cfg.band, hbar=cfg.hbar,
                                    gap_tol=t.gap_tol, herm_tol=t.herm_tol,
                                    multiplier=t.residual_multiplier, atol=t.roundoff_atol,
                                    margin=t.margin, flip_electric=cfg.flip_electric_curvature,
                                    bundle=_bundle(cfg))
    data = report.to_dict()
    data["config_sha256"] = cfg.source_sha256
    _dump_json(data, out / "report.json")
    for r in report.residuals:
        log.info("%-28s %s max=%.3e tol=%.3e", r.name, "PASS" if r.passed else "FAIL",
                 r.max_abs, r.tolerance)
    return 0 if report.passed else 1


def cmd_monopole(cfg: RunConfig, out: Path) -> int:
    bundle = _bundle(cfg)
    t = cfg.tolerances
    result = dict(_header(cfg), command="monopole", monopoles=[], chern=None)
    ok = True
    if sum(cfg.grid.periodic) >= 2:
        mc = lattice_chern(bundle)
        result["chern"] = {"value": mc.charge, "quantization_error": mc.quantization_error}
        ok = mc.quantization_error <= t.chern_tol
    else:
        result["monopoles"] = find_monopoles(bundle, cfg.monopole_half_width)
        for m in result["monopoles"]:
            if m["charge"] is None or m["quantization_error"] > t.flux_quantization_tol:
                ok = False
    result["pass"] = ok
    _dump_json(result, out / "monopoles.json")
    return 0 if ok else 1


def _fit_order(values):
    """Least-squares slope of -log2(residual) against refinement level."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2 or np.any(v <= 0):
        return float("nan")
    lv = np.arange(len(v), dtype=float)
    slope = np.polyfit(lv, np.log2(v), 1)[0]
    return float(-slope)


def sweep_residuals(cfg: RunConfig):
    """Max residual of every field identity at the nodes shared by all levels.

    Each level halves the spacing of every non-trivial spatial axis and the
    time step. Residuals are sampled on the coarsest grid's evaluation
    region, so every level is measured at the same physical points.
    """
    validate_sweep(cfg)
    t = cfg.tolerances
    fam = cfg.family()
    coarse = cfg.grid
    region = evaluation_region(coarse, t.margin)
    names = [name for name, _ in SUITE] + ["noise_floor"]
    rows = {n: [] for n in names}
    grids = []
    g = coarse
    for level in range(cfg.sweep.levels):
        bundle = build_eigenbundle(fam, g, cfg.band, gap_tol=t.gap_tol, herm_tol=t.herm_tol,
                                   overlap_floor=t.overlap_floor)
        ctx = BerryMaxwell(bundle, cfg.hbar, t.margin)
        stride = [2 ** level if n > 1 else 1 for n in coarse.shape]
        stride.append(2 ** level if coarse.nt > 1 else 1)
        sl = tuple(slice(None, None, s) for s in stride)
        fields = {
            "electric_full_vs_eigenstate": ctx.electric_full_vs_eigenstate(),
            "b_psi_relation": ctx.b_psi_relation(),
            "hellmann_feynman": ctx.hellmann_feynman(),
            "electric_routes": ctx.electric_routes(),
            "faraday": ctx.faraday(),
            "monopole_current_floor": ctx.monopole_current_potential,
            "vorticity": ctx.vorticity_identity(),
            "monopole_current_routes": ctx.monopole_current_routes(),
            "continuity": ctx.continuity(),
            "polarization": ctx.polarization_identity(),
            "magnetic_charge_smooth": ctx.magnetic_charge,
        }
        fields["noise_floor"] = curl_field(ctx.spectral.grad_energy * (1.0 / ctx.hbar))
        for name in names:
            F = fields[name]
            mag = np.abs(F.magnitude())[sl]
            m = region & F.mask[sl]
            vals = mag[m]
            rows[name].append((float(vals.max()) if vals.size else 0.0,
                               math.sqrt(float(np.mean(vals * vals))) if vals.size else 0.0))
        grids.append(g)
        log.info("sweep level %d: shape %s nt %d", level, g.shape, g.nt)
        del ctx, bundle
        g = g.refined()
    return names, rows, grids


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    names, rows, grids = sweep_residuals(cfg)
    orders = {n: _fit_order([r[0] for r in rows[n]]) for n in names}
    path = out / "sweep.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "h", "dt", "identity", "max_abs", "l2", "fitted_order"])
        for name in names:
            for level, (mx, l2) in enumerate(rows[name]):
                g = grids[level]
                h = max(g.spacing[a] for a in range(3) if g.shape[a] > 1)
                dt = g.dt if g.has_time else 0.0
                w.writerow([level, format(h, ".17g"), format(dt, ".17g"), name,
                            format(mx, ".17g"), format(l2, ".17g"),
                            format(orders[name], ".17g")])
    lo, hi = cfg.sweep.order_range
    ok = True
    checks = {}
    for name in cfg.sweep.check:
        if name not in orders:
            log.error("unknown identity %r in sweep.check", name)
            ok = False
            continue
        passed = lo <= orders[name] <= hi
        checks[name] = {"fitted_order": orders[name], "pass": passed}
        ok &= passed
    summary = dict(_header(cfg), command="sweep", levels=cfg.sweep.levels,
                   order_range=[lo, hi], fitted_orders=orders, checks=checks)
    summary["pass"] = ok
    _dump_json(summary, out / "sweep_summary.json")
    return 0 if ok else 1


COMMAND_TABLE = {"fields": cmd_fields, "verify": cmd_verify, "monopole": cmd_monopole,
                 "sweep": cmd_sweep}


def run(command, config_path, output_dir=None) -> int:
    cfg = load_config(config_path)
    if cfg.command is not None and cfg.command != command:
        log.warning("config says command=%r; running %r as requested", cfg.command, command)
    out = Path(output_dir) if output_dir is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return COMMAND_TABLE[command](cfg, out)


def build_parser():
    p = argparse.ArgumentParser(prog="berryfield", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMAND_TABLE))
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--output-dir", default=None, help="overrides output_dir from the config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return run(args.command, args.config, args.output_dir)
    except (BerryFieldError, OSError) as exc:
        print(f"berryfield: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

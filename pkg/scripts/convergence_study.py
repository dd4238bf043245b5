"""Refinement study of every field identity.

Runs the (h, dt) halving sweep described by a sweep config and prints the
max residual per level together with the fitted convergence order.

    python scripts/convergence_study.py [configs/rotating_sweep.toml]
"""
import sys
from pathlib import Path

from berryfield.cli import _fit_order, sweep_residuals
from berryfield.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main(path=None):
    cfg = load_config(path or ROOT / "configs" / "rotating_sweep.toml")
    names, rows, grids = sweep_residuals(cfg)
    shapes = "  ".join(f"{g.shape[0]}^3x{g.nt}" for g in grids)
    print(f"levels: {shapes}")
    print(f"{'identity':30s}" + "".join(f"{'L' + str(i):>12s}" for i in range(len(grids)))
          + f"{'order':>9s}")
    for name in names:
        values = [r[0] for r in rows[name]]
        order = _fit_order(values)
        # identities that vanish to roundoff have no meaningful order
        tag = f"{order:9.3f}" if min(values) > 1e-10 else f"{'roundoff':>9s}"
        print(f"{name:30s}" + "".join(f"{v:12.3e}" for v in values) + tag)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)

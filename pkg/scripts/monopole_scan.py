"""Flux of the band curvature through boxes around and away from a degeneracy.

Uses the spin-zeeman lower band on a 41^3 grid over [-1, 1]^3. Boxes
centred on the origin should enclose charge +1 at every size; boxes that
exclude it should enclose zero.

    python scripts/monopole_scan.py
"""
import numpy as np

from berryfield import build_eigenbundle, curvature_local, get_family
from berryfield.electro import find_monopoles, monopole_charge
from berryfield.grid import BoxSurface, ParameterGrid


def main(n=41):
    h = 2.0 / (n - 1)
    grid = ParameterGrid((-1.0,) * 3, (h,) * 3, (n,) * 3)
    bundle = build_eigenbundle(get_family("spin-zeeman"), grid, 0)
    B = curvature_local(bundle)
    c = n // 2
    print("centred boxes")
    print(f"{'half width':>10s} {'charge':>10s} {'error':>10s}")
    for w in range(2, c + 1, 2):
        q = monopole_charge(B, BoxSurface((c - w,) * 3, (c + w,) * 3)).charge
        print(f"{w:10d} {q:10.5f} {abs(q - 1):10.2e}")
    print("shifted boxes (half width 6)")
    for shift in (4, 8, 12):
        lo = (c - 6 + shift, c - 6, c - 6)
        hi = (c + 6 + shift, c + 6, c + 6)
        q = monopole_charge(B, BoxSurface(lo, hi)).charge
        inside = lo[0] <= c <= hi[0]
        print(f"x shift {shift:3d}: charge {q:9.5f}  origin {'inside' if inside else 'outside'}")
    for m in find_monopoles(bundle, half_width=10):
        loc = np.round(m["center"], 6)
        print(f"detected degeneracy at {loc}: charge {m['charge']:.5f}")


if __name__ == "__main__":
    main()

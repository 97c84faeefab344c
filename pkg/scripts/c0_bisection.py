"""Bisection estimate of the critical value for e1 and e3 on several grids, plus the inf-sup bound."""

import argparse
import time
import warnings

from laxhj.domain import make_grid
from laxhj.model import build_model
from laxhj.semigroup import make_params
from laxhj.stationary import estimate_c0, estimate_c0_infsup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="128,256,512")
    ap.add_argument("--iterations", type=int, default=20)
    args = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)
    for name in ("e1", "e3"):
        for n in map(int, args.sizes.split(",")):
            grid = make_grid(n)
            model = build_model(name, grid)
            t0 = time.perf_counter()
            est = estimate_c0(model, (-1.0, 1.0), make_params(model, grid), args.iterations)
            elapsed = time.perf_counter() - t0
            bound, _ = estimate_c0_infsup(model, grid)
            print(
                f"{name} n={n:4d}  bracket=[{est.lo:.3e}, {est.hi:.3e}]  monotone={est.monotone}  "
                f"ambiguous={len(est.ambiguous)}  inf-sup={bound:.4g}  ({elapsed:.1f} s)"
            )


if __name__ == "__main__":
    main()

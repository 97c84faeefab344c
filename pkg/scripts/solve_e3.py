"""Maximal and minimal solutions of the e3 model at c = 0 against the shooting profile.

Prints the distances for a few grid sizes and writes an SVG of the finest one.
"""

import argparse
import warnings

from laxhj.contactflow import shooting_solution
from laxhj.domain import make_grid, sup_diff, write_csv
from laxhj.model import build_model
from laxhj.report import write_svg
from laxhj.semigroup import make_params
from laxhj.stationary import compute_u_min

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,512,1024")
    ap.add_argument("--out", default="e3-solutions")
    args = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)
    sizes = [int(s) for s in args.sizes.split(",")]
    for n in sizes:
        grid = make_grid(n)
        model = build_model("e3", grid)
        pair = compute_u_min(model, make_params(model, grid))
        oracle = shooting_solution(grid)
        print(
            f"n={n:5d}  |u_max - oracle|={sup_diff(pair.u_max, oracle):.4g}  "
            f"|u_max - u_min|={pair.gap:.4g}  min u_max={pair.u_max.values.min():.3g}"
        )
    write_csv(pair.u_max, f"{args.out}/u_max.csv")
    write_csv(pair.u_min, f"{args.out}/u_min.csv")
    x = np.append(grid.nodes, grid.period)
    close = lambda g: np.append(g.values, g.values[0])  # noqa: E731
    path = write_svg(
        f"{args.out}/solution.svg",
        x,
        {"u_max": close(pair.u_max), "u_min": close(pair.u_min), "shooting": close(oracle)},
        title=f"e3, c = 0, n = {sizes[-1]}",
        ylabel="u(x)",
    )
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

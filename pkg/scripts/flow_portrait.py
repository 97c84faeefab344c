"""Contact-flow rest points of e3 and a few trajectories on the zero-energy shell.

Writes fixed_points.json, one CSV per trajectory, and an (x, p) portrait SVG.
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from laxhj.contactflow import ContactState, find_fixed_points, integrate
from laxhj.domain import make_grid
from laxhj.model import build_model
from laxhj.report import normalize, write_svg


def on_shell(x, p):
    return -(0.5 * p * p + math.cos(2 * x) - 1.0) / math.sin(x)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="flow-portrait")
    ap.add_argument("--t-span", type=float, default=15.0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model("e3", make_grid(64))

    fps = find_fixed_points(model)
    (out / "fixed_points.json").write_text(json.dumps([normalize(f.to_dict()) for f in fps], indent=2) + "\n")
    for f in fps:
        print(f"x={f.state.x:.6f} u={f.state.u:+.6f}  {f.kind:15s} eigenvalues {f.eigenvalues[0]:.4f}, {f.eigenvalues[1]:.4f}")

    # Trajectories started on the shell in (0, pi) where the discount damps H.
    starts = [(x0, p0) for x0 in (0.4, 1.2, 2.0, 2.7) for p0 in (-0.4, 0.4)]
    tgrid = np.linspace(0, args.t_span, 400)
    series = {}
    for k, (x0, p0) in enumerate(starts):
        tr = integrate(ContactState(x0, on_shell(x0, p0), p0), model, args.t_span, 1e-3)
        tr.write_csv(out / f"trajectory_{k}.csv")
        print(f"start x={x0}, p={p0:+}: max|H|={np.abs(tr.H).max():.2e}, end x={tr.x[-1]:.4f}, aborted={tr.aborted}")
        series[f"p(t), x0={x0}, p0={p0:+}"] = np.interp(tgrid, tr.t, tr.p)
    path = write_svg(out / "momenta.svg", tgrid, dict(list(series.items())[:4]), xlabel="t", ylabel="p", title="e3 shell trajectories")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

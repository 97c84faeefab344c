"""``hj`` command line: run experiments, write CSV/JSON/SVG artifacts.

Exit codes: 0 ok, 1 usage or configuration error, 2 a ``--check`` assertion
failed, 3 numerical failure (divergence or time cap where convergence was
expected).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .contactflow import (
    ContactState,
    find_fixed_points,
    integrate,
    richardson_midpoint,
    shooting_oracle,
    shooting_solution,
)
from .domain import TWO_PI, GridFunction, make_grid, sup_diff, write_csv
from .model import DifferentiableModel, Model, build_model
from .report import emit_report, normalize, write_svg
from .semigroup import SemigroupParams, StepSizeError, evolve, make_params
from .stationary import (
    BracketError,
    SolveError,
    compute_u_max,
    compute_u_min,
    estimate_c0,
    fixed_point_residual,
)

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3
BUILTIN_C0 = {"e1": 0.0, "e3": 0.0}
SUBCOMMANDS = ("solve", "c0", "evolve", "flow", "oracle", "properties", "all")
log = logging.getLogger("laxhj")


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything a subcommand needs; built from a JSON file and overridden by flags."""

    experiment: str
    model: str | dict = "e3"
    c: float | None = None
    n: int = 512
    period: float = TWO_PI
    dt: float | None = None
    t_max: float | None = None
    tol_fix: float = 1e-6
    out_dir: str | None = None
    seed: int = 0
    emit_svg: bool = False
    check: bool = False
    options: dict = field(default_factory=dict)

    @classmethod
    def from_sources(cls, experiment: str, config_path: str | None, overrides: dict) -> "ExperimentConfig":
        data: dict = {}
        if config_path:
            try:
                data = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {config_path}: {exc}") from exc
            if not isinstance(data, dict):
                raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        opts = dict(data.pop("options", {}) or {})
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data.pop("experiment", None)
        for k, v in overrides.items():
            if v is None:
                continue
            if k in known:
                data[k] = v
            else:
                opts[k] = v
        cfg = cls(experiment=experiment, options=opts, **data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n < 4:
            raise UsageError(f"grid too coarse: n={self.n}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise UsageError("period must be positive")
        if self.dt is not None and not self.dt > 0:
            raise UsageError("dt must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise UsageError("t-max must be positive")
        if not self.tol_fix > 0:
            raise UsageError("tol_fix must be positive")

    def output_dir(self) -> Path:
        base = self.out_dir or os.environ.get("HJ_OUT_DIR") or "hj-out"
        path = Path(base)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"output directory {path} is not writable: {exc}") from exc
        if not os.access(path, os.W_OK):
            raise UsageError(f"output directory {path} is not writable")
        return path

    def model_spec(self) -> dict:
        """Model description; an explicit ``c`` overrides one inside the model spec."""
        if isinstance(self.model, dict):
            spec = dict(self.model)
        elif str(self.model).endswith(".json"):
            try:
                spec = json.loads(Path(self.model).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read model file {self.model}: {exc}") from exc
            if not isinstance(spec, dict):
                raise UsageError(f"model file {self.model} must hold a JSON object")
        else:
            spec = {"builtin": str(self.model)}
        if self.c is not None:
            spec["c"] = self.c
        return spec

    def builtin_name(self) -> str | None:
        spec = self.model_spec()
        return spec.get("builtin")

    def resolve(self) -> tuple[Model, SemigroupParams]:
        grid = make_grid(self.n, self.period)
        try:
            model = build_model(self.model_spec(), grid)
        except (ValueError, TypeError) as exc:
            raise UsageError(str(exc)) from exc
        kwargs = {"tol_fix": self.tol_fix}
        if self.t_max is not None:
            kwargs["t_max"] = self.t_max
        try:
            params = make_params(model, grid, dt=self.dt, **kwargs)
        except (ValueError, StepSizeError) as exc:
            raise UsageError(str(exc)) from exc
        if params.dt * model.lambda_max >= 1.0:
            raise UsageError(f"dt * max|lambda| = {params.dt * model.lambda_max:.4g} must be < 1")
        return model, params


@dataclass
class Outcome:
    results: dict
    checks: dict = field(default_factory=dict)
    numeric_failure: str | None = None


def _write_solution_svg(cfg, out: Path, u: GridFunction, extra: dict | None = None, title: str = "") -> str:
    x = np.append(u.grid.nodes, u.grid.period)
    series = {"u": np.append(u.values, u.values[0])}
    for label, g in (extra or {}).items():
        series[label] = np.append(g.values, g.values[0])
    path = write_svg(out / "solution.svg", x, series, title=title, xlabel="x", ylabel="u(x)")
    return path.name


def run_solve(cfg: ExperimentConfig, out: Path) -> Outcome:
    model, params = cfg.resolve()
    results: dict = {"model": model.name, "c": model.c, "n": cfg.n, "dt": params.dt}
    try:
        u = compute_u_max(model, params)
    except SolveError as exc:
        results["error"] = str(exc)
        results["status"] = exc.report.status
        return Outcome(results, numeric_failure=str(exc))
    write_csv(u, out / "u_max.csv")
    results["u_max_csv"] = "u_max.csv"
    results["u_max_range"] = [float(u.values.min()), float(u.values.max())]
    results["fixed_point_residual"] = fixed_point_residual(u, model, params)
    extra = {}
    if cfg.options.get("with_min"):
        try:
            pair = compute_u_min(model, params, u_max=u)
        except SolveError as exc:
            results["u_min_error"] = str(exc)
            return Outcome(results, numeric_failure=str(exc))
        write_csv(pair.u_min, out / "u_min.csv")
        write_csv(pair.u_min_plus, out / "u_min_plus.csv")
        results["u_min_csv"] = "u_min.csv"
        results["gap"] = pair.gap
        extra["u_min"] = pair.u_min
    checks = {}
    oracle_case = (
        cfg.builtin_name() == "e3"
        and model.c == 0.0
        and abs(cfg.period - TWO_PI) < 1e-12
        and cfg.n >= 128
        and cfg.n % 2 == 0
    )
    if oracle_case:
        oracle = shooting_solution(u.grid)
        write_csv(oracle, out / "oracle.csv")
        dist = sup_diff(u, oracle)
        results["oracle_sup_diff"] = dist
        checks["oracle_sup_diff<=5e-2"] = dist <= 5e-2
        extra["shooting"] = oracle
    else:
        checks["fixed_point_residual<=tol_fix"] = results["fixed_point_residual"] <= params.tol_fix
    if cfg.emit_svg:
        results["svg"] = _write_solution_svg(cfg, out, u, extra, f"{model.name}, c={model.c:g}, n={cfg.n}")
    return Outcome(results, checks)


def run_c0(cfg: ExperimentConfig, out: Path) -> Outcome:
    model, params = cfg.resolve()
    lo = float(cfg.options.get("lo", -1.0))
    hi = float(cfg.options.get("hi", 1.0))
    iters = int(cfg.options.get("iterations", 20))
    try:
        est = estimate_c0(model, (lo, hi), params, iterations=iters, full=bool(cfg.options.get("full", False)))
    except BracketError as exc:
        raise UsageError(str(exc)) from exc
    results = {"model": model.name, "n": cfg.n, "dt": params.dt} | est.to_dict()
    results["c0_center"] = est.center
    checks = {"monotone": est.monotone}
    known = BUILTIN_C0.get(cfg.builtin_name() or "")
    if known is not None:
        checks["width<=2^-19"] = est.width <= (hi - lo) * 2.0**-iters * (1 + 1e-12) and est.width <= 2.0**-19 * (1 + 1e-12)
        checks["center_within_0.05"] = abs(est.center - known) <= 0.05
    return Outcome(results, checks)


def run_evolve(cfg: ExperimentConfig, out: Path) -> Outcome:
    model, params = cfg.resolve()
    init = cfg.options.get("init", "above")
    direction = cfg.options.get("direction", "backward")
    results: dict = {"model": model.name, "c": model.c, "n": cfg.n, "init": init, "dt": params.dt}
    checks = {}
    grid = params.grid
    try:
        if init == "zero":
            phi, ref = GridFunction.constant(grid, 0.0), None
        elif init == "above":
            ref = compute_u_max(model, params)
            phi = ref + 1.0
        elif init in ("below", "between"):
            pair = compute_u_min(model, params)
            ref = pair.u_max
            if init == "below":
                phi = pair.u_min - 0.5
            else:
                mid = 0.5 * (pair.u_min.values + pair.u_max.values) + 0.01
                phi = GridFunction(grid, np.minimum(mid, pair.u_max.values))
        else:
            raise UsageError(f"unknown --init {init!r}; choose zero, above, below, between")
    except SolveError as exc:
        results["error"] = str(exc)
        return Outcome(results, numeric_failure=str(exc))
    if init == "above" and cfg.t_max is None:
        params = replace(params, t_max=100.0)
    rep = evolve(phi, model, params, direction)
    write_csv(rep.final, out / "final.csv")
    hist = np.column_stack([rep.min_history, rep.max_history[:, 1]])
    stride = max(1, len(hist) // 2000)
    np.savetxt(out / "history.csv", hist[::stride], delimiter=",", header="t,min,max", comments="", fmt="%.12g")
    results |= {k: v for k, v in rep.to_dict("final.csv").items() if not k.endswith("history")}
    results["history_csv"] = "history.csv"
    if init in ("above", "between"):
        d = sup_diff(rep.final, ref)
        results["sup_diff_to_u_max"] = d
        checks["converged_to_u_max_within_5e-2"] = d <= 5e-2
    elif init == "below":
        tail = rep.min_history[-max(2, len(rep.min_history) // 4) :, 1]
        checks["min_below_-50"] = bool(rep.min_history[:, 1].min() < -50)
        checks["monotone_tail"] = bool(np.all(np.diff(tail) <= 0))
    if cfg.emit_svg:
        results["svg"] = _write_solution_svg(cfg, out, rep.final, {"u_max": ref} if ref is not None else None)
    return Outcome(results, checks)


def run_flow(cfg: ExperimentConfig, out: Path) -> Outcome:
    grid = make_grid(max(cfg.n, 4), cfg.period)
    try:
        model = build_model(cfg.model_spec(), grid)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    if not isinstance(model, DifferentiableModel):
        raise UsageError("flow needs a differentiable (builtin) model")
    results: dict = {"model": model.name, "c": model.c}
    checks = {}
    traj = cfg.options.get("trajectory")
    if cfg.options.get("fixed_points") or traj is None:
        fps = find_fixed_points(model, int(cfg.options.get("n_seeds", 64)))
        results["fixed_points"] = [fp.to_dict() for fp in fps]
        (out / "fixed_points.json").write_text(
            json.dumps([normalize(fp.to_dict()) for fp in fps], sort_keys=True, indent=2) + "\n"
        )
        if cfg.builtin_name() == "e3" and model.c == 0.0:
            ok, measured = ex.compare_e3_fixed_points(fps)
            results["comparison"] = measured
            checks["four_fixed_points_classified"] = ok
    if traj is not None:
        x0, u0, p0 = map(float, traj)
        span = float(cfg.options.get("t_span", 20.0))
        h = float(cfg.options.get("h", 1e-3))
        tr = integrate(ContactState(x0, u0, p0), model, span, h, cfg.options.get("direction", "forward"))
        tr.write_csv(out / "trajectory.csv")
        results["trajectory_csv"] = "trajectory.csv"
        results["aborted"] = tr.aborted
        results["H0"] = float(tr.H[0])
        results["max_abs_H"] = float(np.abs(tr.H).max())
        if tr.aborted:
            return Outcome(results, checks, numeric_failure="trajectory blew up")
        if abs(tr.H[0]) <= 1e-12:
            checks["H_conserved"] = results["max_abs_H"] <= 1e-8 * (1 + span)
        else:
            dev = float(np.max(np.abs(ex.h_decay_ratio(tr, model) - 1.0)))
            results["H_decay_deviation"] = dev
            checks["H_decay_law"] = dev <= 1e-5
    return Outcome(results, checks)


def run_oracle(cfg: ExperimentConfig, out: Path) -> Outcome:
    n = cfg.n if cfg.n % 4 == 0 else 4 * (cfg.n // 4 + 1)
    if n < 128:
        raise UsageError("oracle needs n >= 128")
    sol = shooting_solution(make_grid(n))
    write_csv(sol, out / "oracle.csv")
    left, right = shooting_oracle("left", n), shooting_oracle("right", n)
    a, b = richardson_midpoint(n)
    results = {
        "n": n,
        "v_half_pi": a,
        "v_half_pi_halved_step": b,
        "richardson_diff": abs(a - b),
        "v_three_half_pi": float(sol.values[3 * n // 4]),
        "flagged_nodes": int(left.flagged.sum() + right.flagged.sum()),
        "oracle_csv": "oracle.csv",
    }
    checks = {
        "richardson<=1e-6": abs(a - b) <= 1e-6,
        "matches_recorded_value": abs(a - ex.ORACLE_MIDPOINT) <= 1e-6,
        "no_negative_radicand": results["flagged_nodes"] == 0,
    }
    if cfg.emit_svg:
        results["svg"] = _write_solution_svg(cfg, out, sol, title="shooting profile")
    return Outcome(results, checks)


def run_properties(cfg: ExperimentConfig, out: Path) -> Outcome:
    cases = int(cfg.options.get("cases", 100))
    suites = ex.property_suites(seed=cfg.seed, cases=cases)
    return Outcome({"seed": cfg.seed, "cases": cases, "suites": suites}, {k: v["passed"] for k, v in suites.items()})


def run_all(cfg: ExperimentConfig, out: Path) -> Outcome:
    only = cfg.options.get("only")
    numbers = [int(k) for k in str(only).split(",")] if only else None
    res = ex.run_all(seed=cfg.seed, numbers=numbers, echo=print)
    return Outcome(
        {"criteria": {str(r.number): r.to_dict() for r in res}},
        {f"criterion_{r.number}": r.passed for r in res},
    )


RUNNERS = {
    "solve": run_solve,
    "c0": run_c0,
    "evolve": run_evolve,
    "flow": run_flow,
    "oracle": run_oracle,
    "properties": run_properties,
    "all": run_all,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    common.add_argument("--model", help="builtin name (e1, e3) or a JSON model file")
    common.add_argument("--c", type=float, help="right-hand side constant")
    common.add_argument("--n", type=int, help="grid size")
    common.add_argument("--dt", type=float, help="time step (default: automatic)")
    common.add_argument("--t-max", dest="t_max", type=float, help="time cap for evolutions")
    common.add_argument("--out", dest="out_dir", help="output directory (fallback: $HJ_OUT_DIR, then ./hj-out)")
    common.add_argument("--emit-svg", dest="emit_svg", action="store_true", default=None)
    common.add_argument("--check", action="store_true", default=None, help="exit 2 unless every assertion passes")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hj", description="Discounted Hamilton-Jacobi equations on the circle.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("solve", parents=[common], help="maximal (and optionally minimal) stationary solution")
    p.add_argument("--with-min", dest="with_min", action="store_true", default=None)
    p = sub.add_parser("c0", parents=[common], help="bisection estimate of the critical value")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--full", action="store_true", default=None, help="classify probes with the full two-stage solver")
    p = sub.add_parser("evolve", parents=[common], help="long-time evolution from a chosen initial datum")
    p.add_argument("--init", choices=["zero", "above", "below", "between"])
    p.add_argument("--direction", choices=["backward", "forward"])
    p = sub.add_parser("flow", parents=[common], help="contact flow: fixed points or a trajectory")
    p.add_argument("--fixed-points", dest="fixed_points", action="store_true", default=None)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--trajectory", nargs=3, type=float, metavar=("X", "U", "P"))
    p.add_argument("--t-span", dest="t_span", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--direction", choices=["forward", "backward"])
    sub.add_parser("oracle", parents=[common], help="shooting profile of the e3 critical solution")
    p = sub.add_parser("properties", parents=[common], help="randomised property suites")
    p.add_argument("--cases", type=int)
    p = sub.add_parser("all", parents=[common], help="full acceptance suite")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


_DEFAULT_N = {"flow": 256, "oracle": 1024}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    if overrides.get("n") is None and args.config is None and args.command in _DEFAULT_N:
        overrides["n"] = _DEFAULT_N[args.command]
    try:
        cfg = ExperimentConfig.from_sources(args.command, args.config, overrides)
        out = cfg.output_dir()
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            outcome = RUNNERS[args.command](cfg, out)
    except UsageError as exc:
        print(f"hj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    results = dict(outcome.results)
    if outcome.checks:
        results["checks"] = outcome.checks
    if outcome.numeric_failure:
        results["numerical_failure"] = outcome.numeric_failure
    try:
        path = emit_report(out / "report.json", args.command, results)
    except OSError as exc:
        print(f"hj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {path}")
    failed = [k for k, ok in outcome.checks.items() if not ok]
    for k, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {k}")
    if outcome.numeric_failure:
        print(f"hj: numerical failure: {outcome.numeric_failure}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.check and failed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

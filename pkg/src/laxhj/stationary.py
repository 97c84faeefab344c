"""Stationary solutions, critical value and Aubry set from long-time runs."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .domain import GridFunction, PeriodicGrid, sup_diff
from .model import Model, residual_gradients
from .semigroup import (
    CONVERGED,
    TIME_CAPPED,
    EvolveReport,
    SemigroupParams,
    backward_step,
    evolve,
)

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    """A stationary run did not converge; ``report`` holds the failing stage."""

    def __init__(self, message: str, report: EvolveReport):
        super().__init__(message)
        self.report = report


class NoSolutionError(SolveError):
    pass


class TimeCapError(SolveError):
    pass


class BracketError(ValueError):
    pass


class AubryEmptyWarning(RuntimeWarning):
    pass


def start_constant(model: Model, grid: PeriodicGrid) -> float:
    """Magnitude of the constant initial data for the extreme solutions."""
    x = grid.nodes
    h0 = float(np.max(np.abs(model.hamiltonian(x, np.zeros_like(x)))))
    lam = model.discount_on(grid)
    pos = lam[lam > 0]
    lam_pos = float(pos.min()) if pos.size else 0.0
    return (h0 + abs(model.c) + 10.0) / max(lam_pos, 0.1)


def warm_dt(model: Model, params: SemigroupParams) -> float | None:
    """Large step for the warm-up stage, or ``None`` if it would not help."""
    dt = 0.5 if model.lambda_max <= 0 else min(0.5, 0.5 / model.lambda_max)
    return dt if dt > 2.0 * params.dt else None


def _run_to_fixed_point(
    u0: GridFunction,
    model: Model,
    params: SemigroupParams,
    direction: str,
    warm: bool,
    warm_t_max: float,
) -> list[EvolveReport]:
    """Evolve to stationarity, first at a large step when ``warm``.

    The warm-up stage runs without refinement and only serves as a starting
    point for the run at ``params.dt``; the returned reports end with the
    first stage that failed or with the final converged stage.
    """
    reports = []
    u = u0
    dtw = warm_dt(model, params) if warm else None
    if dtw is not None:
        rep = evolve(u, model, replace(params, dt=dtw, t_max=warm_t_max, refine=False), direction)
        reports.append(rep)
        if rep.status != CONVERGED:
            return reports
        u = rep.final
    reports.append(evolve(u, model, params, direction))
    return reports


def _raise_for(rep: EvolveReport, what: str) -> None:
    if rep.status == CONVERGED:
        return
    if rep.status == TIME_CAPPED:
        raise TimeCapError(f"{what}: not stationary by t={rep.t_elapsed:.6g} (time-capped)", rep)
    raise NoSolutionError(f"{what}: no solution at this c ({rep.status} at t={rep.t_elapsed:.6g})", rep)


def compute_u_max(
    model: Model,
    params: SemigroupParams,
    *,
    warm: bool = True,
    warm_t_max: float = 4000.0,
    probe: bool = False,
    probe_tol: float | None = None,
) -> GridFunction:
    """Maximal stationary solution: backward evolution from a large constant.

    With ``probe`` the run is repeated from a constant 10 higher and the two
    limits must agree to ``probe_tol`` (default ``100 * tol_fix``).
    """
    grid = params.grid
    top = start_constant(model, grid)
    reps = _run_to_fixed_point(GridFunction.constant(grid, top), model, params, "backward", warm, warm_t_max)
    _raise_for(reps[-1], "u_max")
    u = reps[-1].final
    if probe:
        again = _run_to_fixed_point(GridFunction.constant(grid, top + 10.0), model, params, "backward", warm, warm_t_max)
        _raise_for(again[-1], "u_max probe")
        tol = 100.0 * params.tol_fix if probe_tol is None else probe_tol
        diff = sup_diff(u, again[-1].final)
        if diff > tol:
            raise SolveError(f"maximality probe moved the limit by {diff:.3g} > {tol:.3g}", again[-1])
    return u


@dataclass(frozen=True, eq=False)
class StationaryPair:
    u_max: GridFunction
    u_min: GridFunction
    u_min_plus: GridFunction

    @property
    def gap(self) -> float:
        return sup_diff(self.u_max, self.u_min)


def compute_u_min_plus(model: Model, params: SemigroupParams, *, warm: bool = True, warm_t_max: float = 4000.0) -> GridFunction:
    """Minimal forward fixed point: forward evolution from a very negative constant."""
    grid = params.grid
    reps = _run_to_fixed_point(
        GridFunction.constant(grid, -start_constant(model, grid)), model, params, "forward", warm, warm_t_max
    )
    _raise_for(reps[-1], "u_min_plus")
    return reps[-1].final


def compute_u_min(
    model: Model,
    params: SemigroupParams,
    *,
    u_max: GridFunction | None = None,
    warm: bool = True,
    warm_t_max: float = 4000.0,
    t_max_backward: float | None = None,
) -> StationaryPair:
    """Minimal solution as the backward limit of the minimal forward fixed point.

    The forward limit is a subsolution, so the backward run from it rises
    monotonically; it is run one-sided (see :func:`evolve`), which yields the
    least fixed point of the backward step lying above the forward limit.
    It uses the final step size only, since a warm-up at a coarser step
    could overshoot the minimal solution.
    """
    u_plus = compute_u_min_plus(model, params, warm=warm, warm_t_max=warm_t_max)
    back_params = params if t_max_backward is None else replace(params, t_max=t_max_backward)
    rep = evolve(u_plus, model, back_params, "backward", one_sided=True)
    _raise_for(rep, "u_min")
    if u_max is None:
        u_max = compute_u_max(model, params, warm=warm, warm_t_max=warm_t_max)
    return StationaryPair(u_max=u_max, u_min=rep.final, u_min_plus=u_plus)


SOLVABLE = "solvable"
UNSOLVABLE = "unsolvable"
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class Probe:
    c: float
    outcome: str
    status: str
    t_elapsed: float
    final_min: float

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "outcome": self.outcome,
            "status": self.status,
            "t_elapsed": self.t_elapsed,
            "final_min": self.final_min,
        }


@dataclass(frozen=True)
class C0Estimate:
    """Bisection bracket ``[lo, hi]`` for the critical value."""

    lo: float
    hi: float
    iterations: int
    probes: tuple[Probe, ...] = field(default_factory=tuple)
    monotone: bool = True

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def ambiguous(self) -> tuple[Probe, ...]:
        return tuple(p for p in self.probes if p.outcome == AMBIGUOUS)

    def to_dict(self) -> dict:
        return {
            "c0_lo": self.lo,
            "c0_hi": self.hi,
            "iterations": self.iterations,
            "monotone": self.monotone,
            "probes": [p.to_dict() for p in self.probes],
        }


def classify_c(
    model: Model,
    c: float,
    params: SemigroupParams,
    *,
    full: bool = False,
    warm_t_max: float = 4000.0,
) -> Probe:
    """Decide whether the stationary problem at ``c`` has a solution.

    By default a single backward run from the large constant is made at the
    warm-up step size (see :func:`warm_dt`); with ``full`` the whole
    :func:`compute_u_max` pipeline at ``params.dt`` is used instead.
    Converged runs are solvable, divergent ones unsolvable and time-capped
    ones ambiguous.
    """
    mc = model.with_c(c)
    u0 = GridFunction.constant(params.grid, start_constant(mc, params.grid))
    dtw = warm_dt(mc, params)
    if full or dtw is None:
        reps = _run_to_fixed_point(u0, mc, params, "backward", True, warm_t_max)
    else:
        reps = [evolve(u0, mc, replace(params, dt=dtw, t_max=warm_t_max, refine=False), "backward")]
    last = reps[-1]
    outcome = {CONVERGED: SOLVABLE, TIME_CAPPED: AMBIGUOUS}.get(last.status, UNSOLVABLE)
    t_total = sum(r.t_elapsed for r in reps)
    log.info("c=%.9g -> %s (%s, t=%.4g)", c, outcome, last.status, t_total)
    return Probe(float(c), outcome, last.status, t_total, float(last.final.values.min()))


def estimate_c0(
    model: Model,
    bracket: tuple[float, float],
    params: SemigroupParams,
    iterations: int = 20,
    *,
    ambiguous_as: str = UNSOLVABLE,
    full: bool = False,
    warm_t_max: float = 4000.0,
) -> C0Estimate:
    """Bisect on solvability of the stationary problem in ``c``.

    ``model.c`` is ignored.  Both ends of the bracket are checked first.  A
    run still moving at the time cap is recorded as ambiguous and, for the
    purpose of moving the bracket, treated as ``ambiguous_as``; a run that
    has not settled within the budget is no evidence of solvability, hence
    the default.
    """
    if ambiguous_as not in (SOLVABLE, UNSOLVABLE):
        raise ValueError("ambiguous_as must be 'solvable' or 'unsolvable'")
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")

    def probe(c):
        return classify_c(model, c, params, full=full, warm_t_max=warm_t_max)

    probes = [probe(lo), probe(hi)]
    if probes[0].outcome == SOLVABLE:
        raise BracketError(f"lower end c={lo} is solvable")
    if probes[1].outcome != SOLVABLE:
        raise BracketError(f"upper end c={hi} is not solvable ({probes[1].status})")

    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        pr = probe(mid)
        probes.append(pr)
        solvable = pr.outcome == SOLVABLE or (pr.outcome == AMBIGUOUS and ambiguous_as == SOLVABLE)
        if solvable:
            hi = mid
        else:
            lo = mid

    monotone = classification_is_monotone(probes)
    if not monotone:
        warnings.warn("solvability is not monotone in c at this resolution", RuntimeWarning, stacklevel=2)
    return C0Estimate(lo, hi, iterations, tuple(probes), monotone)


def classification_is_monotone(probes) -> bool:
    """True when no unsolvable probe lies above a solvable one."""
    seen_solvable = False
    for p in sorted(probes, key=lambda p: p.c):
        if p.outcome == SOLVABLE:
            seen_solvable = True
        elif p.outcome == UNSOLVABLE and seen_solvable:
            return False
    return True


def _dh_dp(model: Model):
    d = getattr(model, "dh_dp", None)
    if d is not None:
        return d

    def fd(x, p, eps=1e-6):
        return (model.hamiltonian(x, p + eps) - model.hamiltonian(x, p - eps)) / (2.0 * eps)

    return fd


def infsup_objective(u: np.ndarray, model: Model, grid: PeriodicGrid) -> float:
    """``max_x`` of ``H(x, Du) + lambda(x) u`` over the residual gradient samples."""
    gf = GridFunction(grid, u)
    x = grid.nodes
    grads = residual_gradients(gf)
    r = model.hamiltonian(x[:, None], grads) + (model.discount_on(grid) * u)[:, None]
    return float(np.max(r))


def estimate_c0_infsup(
    model: Model,
    grid: PeriodicGrid,
    *,
    stages: int = 30,
    steps_per_stage: int = 200,
    t_start: float = 1.0,
    t_end: float = 1e-3,
    u0: np.ndarray | None = None,
) -> tuple[float, GridFunction]:
    """Upper bound on the critical value by minimising the worst residual.

    The max over nodes and gradient samples is smoothed by a log-sum-exp at a
    temperature decreasing geometrically from ``t_start`` to ``t_end``; each
    stage runs L-BFGS for ``steps_per_stage`` iterations from the previous
    stage's result.  Returns the best unsmoothed value and its minimiser.
    """
    n, h = grid.n, grid.spacing
    x = grid.nodes
    lam = model.discount_on(grid)
    theta = np.linspace(0.0, 1.0, 11)
    dhdp = _dh_dp(model)
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)

    def smoothed(v, temp):
        back = (v - np.roll(v, 1)) / h
        fwd = (np.roll(v, -1) - v) / h
        p = (1.0 - theta)[None, :] * back[:, None] + theta[None, :] * fwd[:, None]
        r = model.hamiltonian(x[:, None], p) + (lam * v)[:, None]
        rmax = r.max()
        e = np.exp((r - rmax) / temp)
        z = e.sum()
        val = rmax + temp * math.log(z)
        wgt = e / z
        hp = dhdp(x[:, None], p) * wgt
        # p = (1-theta) (v_i - v_{i-1})/h + theta (v_{i+1} - v_i)/h
        a = (hp * (1.0 - theta)[None, :]).sum(axis=1) / h
        b = (hp * theta[None, :]).sum(axis=1) / h
        grad = wgt.sum(axis=1) * lam + a - b
        grad = grad - np.roll(a, -1) + np.roll(b, 1)
        return val, grad

    best_val = infsup_objective(u, model, grid)
    best_u = u.copy()
    for temp in np.geomspace(t_start, t_end, stages):
        res = minimize(smoothed, u, args=(temp,), jac=True, method="L-BFGS-B", options={"maxiter": steps_per_stage})
        u = res.x
        val = infsup_objective(u, model, grid)
        if val < best_val:
            best_val, best_u = val, u.copy()
    return best_val, GridFunction(grid, best_u)


def fixed_point_residual(u: GridFunction, model: Model, params: SemigroupParams) -> float:
    """``sup |step(u) - u| / dt`` for the backward step."""
    return sup_diff(backward_step(u, model, params), u) / params.dt


def compute_aubry_set(u_minus: GridFunction, u_plus: GridFunction, tol: float) -> np.ndarray:
    """Indices of nodes where the two functions agree to ``tol``."""
    idx = np.flatnonzero(np.abs(u_minus.values - u_plus.values) <= tol)
    if idx.size == 0:
        warnings.warn(f"empty Aubry set at tol={tol:.3g}", AubryEmptyWarning, stacklevel=2)
    return idx


def conjugate_forward(u_minus: GridFunction, model: Model, params: SemigroupParams) -> GridFunction:
    """Forward limit started from a backward fixed point.

    Run one-sided (nonincreasing), mirroring the backward stage of
    :func:`compute_u_min`.
    """
    rep = evolve(u_minus, model, params, "forward", one_sided=True)
    _raise_for(rep, "forward conjugate")
    return rep.final


def aubry_set(u_minus: GridFunction, model: Model, params: SemigroupParams, tol: float | None = None) -> np.ndarray:
    """Projected Aubry set of a backward solution, default tolerance ``10 * tol_fix``."""
    u_plus = conjugate_forward(u_minus, model, params)
    return compute_aubry_set(u_minus, u_plus, 10.0 * params.tol_fix if tol is None else tol)

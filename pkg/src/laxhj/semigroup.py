"""Monotone semi-Lagrangian steps for the backward and forward semigroups.

Backward step at node ``x_i``::

    u'(x_i) = [min_v (u(x_i - v dt) + dt L(x_i, v)) + dt c] / (1 + dt lambda(x_i))

Forward step::

    u'(x_i) = [max_v (u(x_i + v dt) - dt L(x_i, v)) - dt c] / (1 - dt lambda(x_i))

``u`` between nodes is the periodic linear interpolant.  Both steps need
``dt * max|lambda| < 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from ._kernels import chord_slack, relax_min
from .domain import GridFunction, PeriodicGrid
from .model import LagrangianTable, Model, legendre_transform

Direction = Literal["backward", "forward"]

CONVERGED = "converged"
DIVERGED_DOWN = "diverged-down"
DIVERGED_UP = "diverged-up"
TIME_CAPPED = "time-capped"


class StepSizeError(ValueError):
    pass


class VelocityBoundaryWarning(RuntimeWarning):
    """The optimal velocity of a step sat on the edge of the velocity range."""


class VelocityBoundaryError(RuntimeError):
    pass


@dataclass(frozen=True)
class SemigroupParams:
    """Time step, Lagrangian table and stopping thresholds for long-time runs.

    ``tol_fix`` bounds the sup-norm change per unit time that counts as
    stationary; it must hold for ``window`` consecutive steps.
    """

    dt: float
    table: LagrangianTable
    tol_fix: float = 1e-6
    window: int = 10
    divergence_floor: float = -1e3
    t_max: float = 200.0
    refine: bool = True
    strict: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StepSizeError(f"dt must be positive, got {self.dt}")
        if not self.tol_fix > 0:
            raise ValueError("tol_fix must be positive")
        if not self.divergence_floor < -1:
            raise ValueError("divergence_floor must be below -1")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.window < 1:
            raise ValueError("window must be at least 1")

    @property
    def grid(self) -> PeriodicGrid:
        return self.table.grid

    def with_dt(self, dt: float) -> "SemigroupParams":
        return replace(self, dt=float(dt))


def auto_dt(model: Model, grid: PeriodicGrid, cfl: float = 2.0) -> float:
    """Default step ``cfl * spacing / v_max``, capped by ``0.5 / max|lambda|``."""
    dt = cfl * grid.spacing / model.v_max
    if model.lambda_max > 0:
        dt = min(dt, 0.5 / model.lambda_max)
    return dt


def make_params(
    model: Model,
    grid: PeriodicGrid,
    dt: float | None = None,
    table: LagrangianTable | None = None,
    **kwargs,
) -> SemigroupParams:
    """Build :class:`SemigroupParams`, tabulating the Lagrangian if needed."""
    if table is None:
        table = legendre_transform(model, grid, strict=kwargs.get("strict", False))
    if dt is None:
        dt = auto_dt(model, grid)
    return SemigroupParams(dt=float(dt), table=table, **kwargs)


def check_step_size(model: Model, params: SemigroupParams) -> None:
    if params.dt * model.lambda_max >= 1.0:
        raise StepSizeError(f"dt * lambda_max = {params.dt * model.lambda_max:.4g} must be < 1")


class Stepper:
    """Applies one step in a fixed direction with arrays prepared once.

    Calling it on a value array returns ``(new_values, boundary_hits)``.
    """

    def __init__(self, model: Model, params: SemigroupParams, direction: Direction = "backward"):
        if direction not in ("backward", "forward"):
            raise ValueError(f"direction must be 'backward' or 'forward', got {direction!r}")
        check_step_size(model, params)
        grid = params.table.grid
        self.grid = grid
        self.direction = direction
        self.dt = params.dt
        self.c = float(model.c)
        self.refine = bool(params.refine)
        self.strict = params.strict
        self._lam = np.ascontiguousarray(model.discount_on(grid))
        self._vel = np.ascontiguousarray(params.table.velocities)
        self._table = np.ascontiguousarray(params.table.values)
        self._slack = chord_slack(self._table)
        self._r = params.dt / grid.spacing
        self._sign = -1.0 if direction == "backward" else 1.0

    def __call__(self, values: np.ndarray) -> tuple[np.ndarray, int]:
        out = np.empty(self.grid.n)
        self.velocities = vout = np.empty(self.grid.n)
        if self.direction == "backward":
            w = np.ascontiguousarray(values, dtype=float)
            hits = relax_min(w, self._lam, self._vel, self._table, self._slack, self._r, self.dt, self.c, 1.0, -1.0, self.refine, out, vout)
        else:
            # max_v (u + ...) - dt c  ==  -(min_v (-u + dt L) + dt c)
            w = -np.asarray(values, dtype=float)
            hits = relax_min(w, self._lam, self._vel, self._table, self._slack, self._r, self.dt, self.c, -1.0, 1.0, self.refine, out, vout)
            np.negative(out, out=out)
        if hits:
            msg = f"{self.direction} step: optimal velocity on the range edge at {hits} nodes; widen v_max"
            if self.strict:
                raise VelocityBoundaryError(msg)
            warnings.warn(msg, VelocityBoundaryWarning, stacklevel=3)
        return out, hits


def _check_grid(u: GridFunction, params: SemigroupParams) -> None:
    if u.grid != params.table.grid:
        raise ValueError("grid function and Lagrangian table live on different grids")


def backward_step(u: GridFunction, model: Model, params: SemigroupParams) -> GridFunction:
    _check_grid(u, params)
    out, _ = Stepper(model, params, "backward")(u.values)
    return GridFunction(u.grid, out)


def forward_step(u: GridFunction, model: Model, params: SemigroupParams) -> GridFunction:
    _check_grid(u, params)
    out, _ = Stepper(model, params, "forward")(u.values)
    return GridFunction(u.grid, out)


@dataclass(frozen=True, eq=False)
class EvolveReport:
    """Outcome of :func:`evolve`; histories are ``(k, 2)`` arrays of ``(t, value)``."""

    final: GridFunction
    status: str
    t_elapsed: float
    steps: int
    min_history: np.ndarray
    max_history: np.ndarray
    last_change: float
    boundary_hits: int = 0
    direction: str = "backward"
    dt: float = field(default=float("nan"))

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self, final_csv_path: str | None = None) -> dict:
        return {
            "status": self.status,
            "t_elapsed": self.t_elapsed,
            "steps": self.steps,
            "dt": self.dt,
            "direction": self.direction,
            "last_change": self.last_change,
            "boundary_hits": self.boundary_hits,
            "min_history": self.min_history.tolist(),
            "max_history": self.max_history.tolist(),
            "final_csv_path": final_csv_path,
        }


def evolve(
    u0: GridFunction,
    model: Model,
    params: SemigroupParams,
    direction: Direction = "backward",
    one_sided: bool = False,
) -> EvolveReport:
    """Step repeatedly until stationary, divergent, or out of time.

    Divergence means the minimum fell below ``divergence_floor`` (backward)
    or the maximum rose above ``-divergence_floor`` (forward).

    With ``one_sided`` the iterates are kept monotone in time: nondecreasing
    for backward runs (each step keeps the larger of old and new values) and
    nonincreasing for forward runs.  For a start that is a subsolution this
    changes nothing in exact arithmetic; on the grid it suppresses the
    O(spacing) interpolation bias that otherwise pushes such runs past the
    fixed point they are approaching.
    """
    _check_grid(u0, params)
    step = Stepper(model, params, direction)
    dt = params.dt
    n_steps_max = max(1, math.ceil(params.t_max / dt - 1e-9))
    vals = np.array(u0.values, dtype=float)
    mins = np.empty(n_steps_max + 1)
    maxs = np.empty(n_steps_max + 1)
    mins[0], maxs[0] = vals.min(), vals.max()
    streak = 0
    hits_total = 0
    change = math.inf
    status = TIME_CAPPED
    k = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VelocityBoundaryWarning)
        while k < n_steps_max:
            new, hits = step(vals)
            if one_sided:
                (np.maximum if direction == "backward" else np.minimum)(new, vals, out=new)
            hits_total += hits
            change = float(np.max(np.abs(new - vals))) / dt
            vals = new
            k += 1
            mins[k], maxs[k] = vals.min(), vals.max()
            if direction == "backward" and not mins[k] >= params.divergence_floor:
                status = DIVERGED_DOWN
                break
            if direction == "forward" and not maxs[k] <= -params.divergence_floor:
                status = DIVERGED_UP
                break
            streak = streak + 1 if change <= params.tol_fix else 0
            if streak >= params.window:
                status = CONVERGED
                break
    if hits_total:
        warnings.warn(
            f"{direction} evolution: optimal velocity on the range edge {hits_total} times",
            VelocityBoundaryWarning,
            stacklevel=2,
        )
    t = np.arange(k + 1) * dt
    final = GridFunction(u0.grid, np.nan_to_num(vals, nan=0.0, posinf=1e300, neginf=-1e300))
    return EvolveReport(
        final=final,
        status=status,
        t_elapsed=k * dt,
        steps=k,
        min_history=np.column_stack([t, mins[: k + 1]]),
        max_history=np.column_stack([t, maxs[: k + 1]]),
        last_change=change,
        boundary_hits=hits_total,
        direction=direction,
        dt=dt,
    )


def reflected_model(model: Model) -> Model:
    """Model with ``H(x, -p)`` and ``-lambda``; its Lagrangian is ``L(x, -v)``."""
    h, lam = model.hamiltonian, model.discount
    return replace(
        Model(
            hamiltonian=lambda x, p: h(x, -p),
            discount=lambda x: -np.asarray(lam(x)),
            c=model.c,
            p_max=model.p_max,
            v_max=model.v_max,
            n_momenta=model.n_momenta,
            n_velocities=model.n_velocities,
            name=f"{model.name}-reflected",
        ),
        lambda_max=model.lambda_max,
        sign_change=model.sign_change,
    )


def reflected_params(params: SemigroupParams) -> SemigroupParams:
    return replace(params, table=params.table.reflected())

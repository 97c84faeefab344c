"""Characteristics of ``H0(x, p) + lambda(x) u - c = 0`` as a contact flow.

With ``H(x, u, p) = H0(x, p) + lambda(x) u - c``::

    x' = H_p
    p' = -H_x - p H_u
    u' = p H_p - H

Along the flow ``dH/dt = -lambda(x) H``, so ``{H = 0}`` is invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .domain import TWO_PI, GridFunction, PeriodicGrid
from .model import DifferentiableModel

DEGENERATE_DET = 1e-10
ZERO_TRACE = 1e-10
DEDUP_DISTANCE = 1e-6


@dataclass(frozen=True)
class ContactState:
    x: float
    u: float
    p: float
    period: float = TWO_PI

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.u, self.p)):
            raise ValueError(f"non-finite contact state {(self.x, self.u, self.p)}")
        object.__setattr__(self, "x", float(self.x) % self.period)
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "p", float(self.p))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.u, self.p])


def contact_hamiltonian(model: DifferentiableModel, x, u, p):
    return model.hamiltonian(x, p) + model.discount(x) * u - model.c


def contact_rhs(s: ContactState, model: DifferentiableModel) -> tuple[float, float, float]:
    """Time derivatives ``(dx, dp, du)`` at state ``s``."""
    dx, du, dp = _rhs(np.array([s.x, s.u, s.p]), model)
    return float(dx), float(dp), float(du)


def _rhs(y: np.ndarray, model: DifferentiableModel) -> np.ndarray:
    x, u, p = y
    lam = model.discount(x)
    hp = model.dh_dp(x, p)
    hx = model.dh_dx(x, p) + model.dlambda_dx(x) * u
    h = model.hamiltonian(x, p) + lam * u - model.c
    return np.array([hp, p * hp - h, -hx - p * lam], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of a contact trajectory; ``t`` runs in steps of ``+h`` or ``-h``."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    p: np.ndarray
    H: np.ndarray
    h: float
    direction: str
    aborted: bool = False

    def __len__(self) -> int:
        return self.t.shape[0]

    def state(self, k: int) -> ContactState:
        return ContactState(self.x[k], self.u[k], self.p[k])

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = ["t,x,u,p,H"]
        for row in zip(self.t, self.x, self.u, self.p, self.H):
            rows.append(",".join(f"{v:.17g}" for v in row))
        path.write_text("\n".join(rows) + "\n")
        return path


def integrate(
    s0: ContactState,
    model: DifferentiableModel,
    t_span: float,
    h: float,
    direction: str = "forward",
    *,
    constraint: Callable[[float], tuple[float, float]] | None = None,
    blowup: float = 1e6,
) -> Trajectory:
    """Classical RK4 integration of the contact flow over ``t_span``.

    ``constraint`` optionally maps a position to ``(u, p)`` on the graph of a
    known solution; after every step the state is put back on that graph, so
    the position follows the solution's characteristic.  This is how
    calibrated curves are traced backward in time near hyperbolic rest
    points, where the unconstrained flow amplifies rounding at the rate of
    the unstable eigenvalue.

    The run stops early, with ``aborted`` set, once ``|u|`` or ``|p|``
    exceeds ``blowup``.
    """
    if h <= 0 or t_span <= 0:
        raise ValueError("h and t_span must be positive")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    k = h if direction == "forward" else -h
    n_steps = int(round(t_span / h))
    ys = np.empty((n_steps + 1, 3))
    y = np.array([s0.x, s0.u, s0.p], dtype=float)
    if constraint is not None:
        y[1], y[2] = constraint(y[0])
    ys[0] = y
    aborted = False
    last = n_steps
    for i in range(n_steps):
        k1 = _rhs(y, model)
        k2 = _rhs(y + 0.5 * k * k1, model)
        k3 = _rhs(y + 0.5 * k * k2, model)
        k4 = _rhs(y + k * k3, model)
        y = y + (k / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if constraint is not None:
            y[1], y[2] = constraint(y[0])
        if not (np.all(np.isfinite(y)) and abs(y[1]) <= blowup and abs(y[2]) <= blowup):
            aborted = True
            last = i
            break
        ys[i + 1] = y
    ys = ys[: last + 1]
    t = k * np.arange(last + 1)
    H = contact_hamiltonian(model, ys[:, 0], ys[:, 1], ys[:, 2])
    return Trajectory(t, np.mod(ys[:, 0], s0.period), ys[:, 1], ys[:, 2], H, h, direction, aborted)


def linearization_eigenvalues(jacobian) -> tuple[complex, complex]:
    """Roots of ``s^2 - tr s + det``, ordered by real then imaginary part."""
    J = np.asarray(jacobian, dtype=float)
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    root = np.sqrt(complex(tr * tr - 4.0 * det))
    pair = sorted(((tr - root) / 2.0, (tr + root) / 2.0), key=lambda z: (z.real, z.imag))
    return pair[0], pair[1]


def classify(jacobian) -> str:
    """Stability class of a planar rest point from trace, determinant and discriminant."""
    J = np.asarray(jacobian, dtype=float)
    if J.shape != (2, 2) or not np.all(np.isfinite(J)):
        raise ValueError("expected a finite 2x2 matrix")
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(det) < DEGENERATE_DET:
        return "degenerate"
    if det < 0:
        return "saddle"
    disc = tr * tr - 4.0 * det
    if disc < 0:
        if abs(tr) < ZERO_TRACE:
            return "center"
        return "stable-focus" if tr < 0 else "unstable-focus"
    return "stable-node" if tr < 0 else "unstable-node"


@dataclass(frozen=True, eq=False)
class FixedPointReport:
    state: ContactState
    jacobian: np.ndarray
    eigenvalues: tuple[complex, complex]
    kind: str
    isolated: bool = True
    full_jacobian: np.ndarray | None = None

    def to_dict(self) -> dict:
        e1, e2 = self.eigenvalues
        return {
            "x": self.state.x,
            "u": self.state.u,
            "p": self.state.p,
            "eigen_re1": e1.real,
            "eigen_im1": e1.imag,
            "eigen_re2": e2.real,
            "eigen_im2": e2.imag,
            "class": self.kind,
            "isolated": self.isolated,
        }


def _rest_residual(model: DifferentiableModel, x: float, u: float) -> np.ndarray:
    zero = 0.0
    return np.array(
        [
            model.hamiltonian(x, zero) + model.discount(x) * u - model.c,
            model.dh_dx(x, zero) + model.dlambda_dx(x) * u,
        ],
        dtype=float,
    )


def _fd_jacobian(f, z: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    cols = []
    for k in range(z.shape[0]):
        e = np.zeros_like(z)
        e[k] = eps
        cols.append((f(z + e) - f(z - e)) / (2.0 * eps))
    return np.column_stack(cols)


def _newton(model, x0, u0, max_iter=60, tol=1e-13):
    z = np.array([x0, u0], dtype=float)
    F = lambda w: _rest_residual(model, w[0], w[1])  # noqa: E731
    for _ in range(max_iter):
        r = F(z)
        if not np.all(np.isfinite(r)):
            return None
        J = _fd_jacobian(F, z, 1e-7)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        z = z + step
        if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(z))) and np.max(np.abs(F(z))) < tol:
            return z
        if np.max(np.abs(z)) > 1e8:
            return None
    r = F(z)
    return z if np.all(np.isfinite(r)) and np.max(np.abs(r)) < tol else None


def _is_isolated(model, x: float, u: float, probe: float = 1e-3) -> bool:
    # A root is part of a continuum when the rest equations still vanish a
    # small distance along the null direction of their Jacobian.
    F = lambda w: _rest_residual(model, w[0], w[1])  # noqa: E731
    J = _fd_jacobian(F, np.array([x, u]), 1e-7)
    _, sv, vt = np.linalg.svd(J)
    if sv[-1] > 1e-8 * max(1.0, sv[0]):
        return True
    d = vt[-1]
    for sgn in (1.0, -1.0):
        if np.max(np.abs(F(np.array([x, u]) + sgn * probe * d))) > 1e-10:
            return True
    return False


def reduced_jacobian(model: DifferentiableModel, x: float, u: float, p: float = 0.0) -> np.ndarray:
    """Linearisation of ``(x', p')`` in ``(x, p)`` with ``u`` frozen."""

    def f(z):
        d = _rhs(np.array([z[0], u, z[1]]), model)
        return np.array([d[0], d[2]])

    return _fd_jacobian(f, np.array([x, p]))


def full_jacobian(model: DifferentiableModel, x: float, u: float, p: float = 0.0) -> np.ndarray:
    """Linearisation of ``(x', u', p')`` in ``(x, u, p)``."""
    return _fd_jacobian(lambda z: _rhs(z, model), np.array([x, u, p]))


def find_fixed_points(
    model: DifferentiableModel,
    n_seeds: int = 64,
    u_range: tuple[float, float] = (-3.0, 3.0),
    period: float = TWO_PI,
) -> list[FixedPointReport]:
    """Rest points of the contact flow via Newton from a grid of seeds in ``(x, u)``.

    Rest points have ``p = 0`` and solve ``H0(x,0) + lambda u = c``,
    ``d/dx H0(x,0) + lambda' u = 0``.  Seeds that fail to converge are
    dropped.  Roots closer than 1e-6 are merged.  A root from which the
    system keeps vanishing along its Jacobian's null direction lies on a
    continuum of rest points; it is kept and marked ``isolated=False``.
    """
    nx = max(1, n_seeds // 4)
    nu = max(1, n_seeds // nx)
    roots: list[np.ndarray] = []
    for xs in period * np.arange(nx) / nx:
        for us in np.linspace(u_range[0], u_range[1], nu):
            z = _newton(model, xs, us)
            if z is None:
                continue
            z[0] = z[0] % period
            if period - z[0] < DEDUP_DISTANCE:
                z[0] = 0.0
            dup = False
            for r in roots:
                dxp = abs(r[0] - z[0])
                dxp = min(dxp, period - dxp)
                if max(dxp, abs(r[1] - z[1])) < DEDUP_DISTANCE:
                    dup = True
                    break
            if not dup:
                roots.append(z)
    roots.sort(key=lambda r: (r[0], r[1]))
    reports = []
    for x, u in roots:
        J = reduced_jacobian(model, x, u)
        isolated = _is_isolated(model, x, u)
        reports.append(
            FixedPointReport(
                state=ContactState(x, u, 0.0, period),
                jacobian=J,
                eigenvalues=linearization_eigenvalues(J),
                kind=classify(J),
                isolated=isolated,
                full_jacobian=full_jacobian(model, x, u),
            )
        )
    return reports


# Shooting construction of the critical solution for H0 = p^2/2 + cos 2x - 1,
# lambda = sin x: on each half circle the profile solves
# v' = +-sqrt(2 (1 - cos 2x - v sin x)) from both ends, where v = v' = 0.

RADICAND_TOL = 1e-8


def _radicand(x, v):
    return 2.0 * (1.0 - math.cos(2.0 * x) - v * math.sin(x))


def _one_sided(x_nodes: np.ndarray, start: float, direction: int, substeps: int, eps: float):
    """RK4 from ``start`` (where v = 0) through ``x_nodes`` in the given direction.

    Returns values, signed slopes, and the most negative radicand met on the
    way into each node.
    """
    def f(x, v):
        return direction * math.sqrt(max(0.0, _radicand(x, v)))

    order = np.argsort(direction * x_nodes)
    vals = np.empty_like(x_nodes)
    worst = np.zeros_like(x_nodes)
    x = start + direction * eps
    v = eps * eps
    for idx in order:
        target = x_nodes[idx]
        if direction * (target - start) <= eps:
            # Series start v ~ (x - start)^2 near the degenerate end.
            vals[idx] = (target - start) ** 2
            worst[idx] = 0.0
            continue
        span = target - x
        m = max(1, int(math.ceil(abs(span) / (abs(x_nodes[1] - x_nodes[0]) / substeps) - 1e-9)))
        step = span / m
        low = 0.0
        for _ in range(m):
            k1 = f(x, v)
            k2 = f(x + 0.5 * step, v + 0.5 * step * k1)
            k3 = f(x + 0.5 * step, v + 0.5 * step * k2)
            k4 = f(x + step, v + step * k3)
            v = v + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            x = x + step
            low = min(low, _radicand(x, v))
        x = target
        vals[idx] = v
        worst[idx] = low
    slopes = np.array([direction * math.sqrt(max(0.0, _radicand(xx, vv))) for xx, vv in zip(x_nodes, vals)])
    return vals, slopes, worst


@dataclass(frozen=True, eq=False)
class OracleSegment:
    """Shooting profile on one half circle, at grid nodes including both ends."""

    x: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    flagged: np.ndarray

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.flagged))


def shooting_oracle(branch: str, n: int, substeps: int = 8, eps: float = 1e-4) -> OracleSegment:
    """Critical profile on ``left`` = [0, pi] or ``right`` = [pi, 2 pi] at the nodes of an ``n``-grid.

    Each end carries v = 0; the ODE is integrated inward from both ends and
    the pointwise minimum of the two profiles is kept.  Nodes where the
    selected profile met a radicand below -1e-8 before clamping are flagged.
    """
    if n < 128 or n % 2:
        raise ValueError("n must be even and at least 128")
    half = n // 2
    if branch == "left":
        idx = np.arange(0, half + 1)
        a, b = 0.0, math.pi
    elif branch == "right":
        idx = np.arange(half, n + 1)
        a, b = math.pi, TWO_PI
    else:
        raise ValueError("branch must be 'left' or 'right'")
    x = idx * (TWO_PI / n)
    x[0], x[-1] = a, b
    v_r, s_r, w_r = _one_sided(x, a, +1, substeps, eps)
    v_l, s_l, w_l = _one_sided(x, b, -1, substeps, eps)
    use_r = v_r <= v_l
    values = np.where(use_r, v_r, v_l)
    slopes = np.where(use_r, s_r, s_l)
    worst = np.where(use_r, w_r, w_l)
    values[0] = values[-1] = 0.0
    return OracleSegment(x, values, slopes, worst < -RADICAND_TOL)


def shooting_solution(grid: PeriodicGrid, substeps: int = 8) -> GridFunction:
    """Both half-circle profiles assembled into a grid function."""
    if abs(grid.period - TWO_PI) > 1e-12:
        raise ValueError("the shooting profile lives on a 2 pi periodic grid")
    left = shooting_oracle("left", grid.n, substeps)
    right = shooting_oracle("right", grid.n, substeps)
    half = grid.n // 2
    vals = np.empty(grid.n)
    vals[: half + 1] = left.values
    vals[half:] = right.values[:-1]
    return GridFunction(grid, vals)


def richardson_midpoint(n: int = 1024, substeps: int = 8) -> tuple[float, float]:
    """Profile value at pi/2 with ``substeps`` and ``2 * substeps``; returns both."""
    if n % 4:
        raise ValueError("n must be divisible by 4 so that pi/2 is a node")
    a = shooting_oracle("left", n, substeps)
    b = shooting_oracle("left", n, 2 * substeps)
    k = n // 4
    return float(a.values[k]), float(b.values[k])


def solution_graph(n: int = 4096, substeps: int = 8) -> Callable[[float], tuple[float, float]]:
    """Map ``x -> (v(x), v'(x))`` for the critical profile, suitable as an ``integrate`` constraint.

    Values are linear interpolation of the profile on an ``n``-grid; the slope
    comes from the profile's ODE with the sign of the active one-sided branch.
    """
    grid = PeriodicGrid(n)
    prof = shooting_solution(grid, substeps)
    xs = np.append(grid.nodes, TWO_PI)
    vs = np.append(prof.values, prof.values[0])

    def graph(x: float) -> tuple[float, float]:
        xm = x % TWO_PI
        v = float(np.interp(xm, xs, vs))
        sign = 1.0 if (xm % math.pi) < 0.5 * math.pi else -1.0
        return v, sign * math.sqrt(max(0.0, _radicand(xm, v)))

    return graph

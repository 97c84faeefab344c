"""Hamiltonian data ``H(x, p) + lambda(x) u = c``, its Lagrangian, and residuals.

Sampler callables must accept numpy arrays and broadcast like ufuncs.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .domain import GridFunction, PeriodicGrid

Sampler2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
Sampler1 = Callable[[np.ndarray], np.ndarray]

TOL_CONVEX = 1e-9
TOL_FY = 1e-6
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


class ConvexityError(ValueError):
    pass


class LegendreBoundaryWarning(RuntimeWarning):
    """The maximising momentum sits on the edge of the sampled momentum range."""


class LegendreBoundaryError(RuntimeError):
    pass


def symmetric_grid(half_width: float, count: int) -> np.ndarray:
    """Odd-sized grid on ``[-half_width, half_width]`` that is exactly symmetric and contains 0."""
    if count < 3 or count % 2 == 0:
        raise ValueError(f"symmetric grid needs an odd count >= 3, got {count}")
    k = (count - 1) // 2
    half = half_width * np.arange(1, k + 1) / k
    return np.concatenate([-half[::-1], [0.0], half])


@dataclass(frozen=True)
class Model:
    """Data of the stationary equation on a periodic grid.

    ``lambda_max`` and ``sign_change`` describe the discount on the grid the
    model was built for; ``sign_change`` records whether it takes both signs.
    """

    hamiltonian: Sampler2
    discount: Sampler1
    c: float = 0.0
    p_max: float = 10.0
    v_max: float = 8.0
    n_momenta: int = 2049
    n_velocities: int = 129
    lambda_max: float = 0.0
    sign_change: bool = False
    name: str = "custom"

    @property
    def p_range(self) -> tuple[float, float]:
        return (-self.p_max, self.p_max)

    @property
    def v_range(self) -> tuple[float, float]:
        return (-self.v_max, self.v_max)

    def with_c(self, c: float) -> "Model":
        return replace(self, c=float(c))

    def shifted(self, a: float) -> "Model":
        """The same model with ``H`` replaced by ``H + a``."""
        h = self.hamiltonian
        return replace(self, hamiltonian=lambda x, p: h(x, p) + a, name=f"{self.name}{a:+g}")

    def discount_on(self, grid: PeriodicGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.discount(grid.nodes), dtype=float), (grid.n,)).copy()


@dataclass(frozen=True)
class DifferentiableModel(Model):
    """A :class:`Model` that also carries the partial derivatives of ``H`` and ``lambda``."""

    dh_dx: Sampler2 | None = None
    dh_dp: Sampler2 | None = None
    dlambda_dx: Sampler1 | None = None

    def __post_init__(self):
        if self.dh_dx is None or self.dh_dp is None or self.dlambda_dx is None:
            raise ValueError("DifferentiableModel needs dh_dx, dh_dp and dlambda_dx")


@dataclass(frozen=True)
class ModelSpec:
    """Description from which :func:`build_model` produces a :class:`Model`."""

    builtin: str | None = None
    c: float = 0.0
    p_max: float = 10.0
    v_max: float = 8.0
    n_velocities: int = 129
    n_momenta: int = 2049
    hamiltonian: Sampler2 | None = None
    discount: Sampler1 | None = None
    name: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


def load_model_spec(path) -> ModelSpec:
    """Read a JSON model file with keys such as ``builtin``, ``c``, ``p_max``."""
    return ModelSpec.from_mapping(json.loads(Path(path).read_text()))


def _e1_parts():
    return dict(
        hamiltonian=lambda x, p: 0.5 * p**2 + 0.0 * x,
        discount=np.sin,
        dh_dx=lambda x, p: 0.0 * (x + p),
        dh_dp=lambda x, p: p + 0.0 * x,
        dlambda_dx=np.cos,
    )


def _e3_parts():
    return dict(
        hamiltonian=lambda x, p: 0.5 * p**2 + np.cos(2.0 * x) - 1.0,
        discount=np.sin,
        dh_dx=lambda x, p: -2.0 * np.sin(2.0 * x) + 0.0 * p,
        dh_dp=lambda x, p: p + 0.0 * x,
        dlambda_dx=np.cos,
    )


BUILTINS = {"e1": _e1_parts, "e3": _e3_parts}


def build_model(spec, grid: PeriodicGrid) -> Model:
    """Construct a model and its grid diagnostics.

    ``spec`` may be a builtin name (``"e1"``, ``"e3"``), a mapping of
    :class:`ModelSpec` fields, or a :class:`ModelSpec`.  Builtins come back as
    :class:`DifferentiableModel`.
    """
    if isinstance(spec, str):
        spec = ModelSpec(builtin=spec)
    elif isinstance(spec, dict):
        spec = ModelSpec.from_mapping(spec)
    if not (spec.p_max > 0 and spec.v_max > 0):
        raise ValueError("empty momentum or velocity range")
    common = dict(
        c=float(spec.c),
        p_max=float(spec.p_max),
        v_max=float(spec.v_max),
        n_momenta=int(spec.n_momenta),
        n_velocities=int(spec.n_velocities),
    )
    if spec.builtin is not None:
        if spec.builtin not in BUILTINS:
            raise ValueError(f"unknown builtin model {spec.builtin!r}; choose from {sorted(BUILTINS)}")
        model: Model = DifferentiableModel(name=spec.name or spec.builtin, **BUILTINS[spec.builtin](), **common)
    else:
        if spec.hamiltonian is None or spec.discount is None:
            raise ValueError("custom model needs hamiltonian and discount samplers")
        model = Model(spec.hamiltonian, spec.discount, name=spec.name or "custom", **common)

    lam = model.discount_on(grid)
    _check_convex(model, grid)
    return replace(
        model,
        lambda_max=float(np.max(np.abs(lam))),
        sign_change=bool(lam.max() > 0 and lam.min() < 0),
    )


def _check_convex(model: Model, grid: PeriodicGrid) -> None:
    p = symmetric_grid(model.p_max, model.n_momenta)
    for lo in range(0, grid.n, 256):
        x = grid.nodes[lo : lo + 256]
        hv = model.hamiltonian(x[:, None], p[None, :])
        d2 = hv[:, 2:] - 2.0 * hv[:, 1:-1] + hv[:, :-2]
        scale = np.maximum(1.0, np.max(np.abs(hv), axis=1))
        bad = np.min(d2, axis=1) < -TOL_CONVEX * scale
        if np.any(bad):
            i = lo + int(np.argmax(bad))
            raise ConvexityError(f"hamiltonian is not convex in p at node {i} (x={grid.nodes[i]:.6g})")


@dataclass(frozen=True, eq=False)
class LagrangianTable:
    """``values[i, j]`` = sup over momenta of ``velocities[j] * p - H(x_i, p)``.

    ``momenta[i, j]`` is the momentum attaining the supremum.
    """

    grid: PeriodicGrid
    velocities: np.ndarray
    values: np.ndarray
    momenta: np.ndarray
    boundary_hits: int = 0

    @property
    def m(self) -> int:
        return self.velocities.shape[0]

    def reflected(self) -> "LagrangianTable":
        """Table of ``(x, v) -> L(x, -v)`` on the same (symmetric) velocity grid."""
        return LagrangianTable(
            self.grid,
            self.velocities,
            np.ascontiguousarray(self.values[:, ::-1]),
            np.ascontiguousarray(-self.momenta[:, ::-1]),
            self.boundary_hits,
        )

    def write_csv(self, path) -> Path:
        path = Path(path)
        header = "x," + ",".join(f"{v:.12g}" for v in self.velocities)
        rows = [header] + [
            f"{x:.17g}," + ",".join(f"{val:.17g}" for val in row) for x, row in zip(self.grid.nodes, self.values)
        ]
        path.write_text("\n".join(rows) + "\n")
        return path


def legendre_transform(
    model: Model,
    grid: PeriodicGrid,
    m: int | None = None,
    strict: bool = False,
    refine_iters: int = 60,
) -> LagrangianTable:
    """Tabulate the Lagrangian on the model's velocity range.

    The supremum is first taken over the sampled momentum grid; the
    objective is concave in ``p``, so a golden-section search on the two
    neighbouring cells then locates the maximiser to near machine precision.
    A maximiser on the edge of the momentum range triggers a
    :class:`LegendreBoundaryWarning` (an error when ``strict``).
    """
    m = model.n_velocities if m is None else int(m)
    if m < 64:
        raise ValueError(f"need at least 64 velocities, got {m}")
    vel = symmetric_grid(model.v_max, m)
    p = symmetric_grid(model.p_max, model.n_momenta)
    x = grid.nodes
    n, n_p = grid.n, p.shape[0]

    best = np.empty((n, m))
    kbest = np.empty((n, m), dtype=np.intp)
    chunk = max(1, 2_000_000 // (m * n_p))
    for lo in range(0, n, chunk):
        xs = x[lo : lo + chunk]
        hv = model.hamiltonian(xs[:, None], p[None, :])
        obj = vel[None, :, None] * p[None, None, :] - hv[:, None, :]
        k = np.argmax(obj, axis=2)
        kbest[lo : lo + chunk] = k
        best[lo : lo + chunk] = np.take_along_axis(obj, k[:, :, None], axis=2)[:, :, 0]

    on_edge = (kbest == 0) | (kbest == n_p - 1)
    hits = int(np.count_nonzero(on_edge))
    if hits:
        msg = f"Legendre maximiser on the momentum boundary at {hits} (node, velocity) pairs; widen p_max"
        if strict:
            raise LegendreBoundaryError(msg)
        warnings.warn(msg, LegendreBoundaryWarning, stacklevel=2)

    pbest = p[kbest]
    a = p[np.maximum(kbest - 1, 0)]
    b = p[np.minimum(kbest + 1, n_p - 1)]
    X = np.broadcast_to(x[:, None], (n, m))
    V = np.broadcast_to(vel[None, :], (n, m))

    def objective(q):
        return V * q - model.hamiltonian(X, q)

    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(refine_iters):
        left = f1 > f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        nx1 = np.where(left, b - _GOLDEN * (b - a), x2)
        nx2 = np.where(left, x1, a + _GOLDEN * (b - a))
        nf1 = np.where(left, np.nan, f2)
        nf2 = np.where(left, f1, np.nan)
        need1 = np.isnan(nf1)
        nf1 = np.where(need1, objective(nx1), nf1)
        nf2 = np.where(~need1, objective(nx2), nf2)
        x1, x2, f1, f2 = nx1, nx2, nf1, nf2
    for cand_p, cand_f in ((x1, f1), (x2, f2)):
        better = cand_f > best
        best = np.where(better, cand_f, best)
        pbest = np.where(better, cand_p, pbest)

    return LagrangianTable(grid, vel, np.ascontiguousarray(best), np.ascontiguousarray(pbest), hits)


def residual_gradients(u: GridFunction, n_interior: int = 9) -> np.ndarray:
    """One-sided difference quotients and convex combinations, shape ``(n, n_interior + 2)``."""
    h = u.grid.spacing
    v = u.values
    back = (v - np.roll(v, 1)) / h
    fwd = (np.roll(v, -1) - v) / h
    theta = np.linspace(0.0, 1.0, n_interior + 2)
    return (1.0 - theta)[None, :] * back[:, None] + theta[None, :] * fwd[:, None]


def subsolution_residual(u: GridFunction, model: Model) -> GridFunction:
    """Nodewise ``max_p H(x, p) + lambda(x) u(x) - c`` over the difference-gradient samples."""
    x = u.grid.nodes
    grads = residual_gradients(u)
    hmax = np.max(model.hamiltonian(x[:, None], grads), axis=1)
    return GridFunction(u.grid, hmax + model.discount_on(u.grid) * u.values - model.c)


def is_subsolution(u: GridFunction, model: Model, tol: float = 1e-9) -> bool:
    return float(np.max(subsolution_residual(u, model).values)) <= tol


def fenchel_young_gap(model: Model, table: LagrangianTable, rows=None) -> np.ndarray:
    """``min_p [L(x, v) + H(x, p) - v p]`` over the momentum grid and the stored maximiser.

    Shape ``(len(rows), m)``.  Non-negative up to rounding; small when the
    table is accurate.
    """
    rows = np.arange(table.grid.n) if rows is None else np.asarray(rows)
    p = symmetric_grid(model.p_max, model.n_momenta)
    x = table.grid.nodes[rows]
    vel = table.velocities
    out = np.empty((rows.shape[0], vel.shape[0]))
    for k, (xi, i) in enumerate(zip(x, rows)):
        L = table.values[i]
        grid_gap = L[:, None] + model.hamiltonian(xi, p)[None, :] - vel[:, None] * p[None, :]
        ps = table.momenta[i]
        own = L + model.hamiltonian(xi, ps) - vel * ps
        out[k] = np.minimum(grid_gap.min(axis=1), own)
    return out

"""Uniform periodic grids on a circle and the functions sampled on them."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._kernels import interp_index, interp_many

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """``n`` equally spaced nodes ``x_i = i * spacing`` on ``[0, period)``."""

    n: int
    period: float = TWO_PI

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"grid too coarse: n={self.n} (need n >= 4)")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive and finite, got {self.period}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "period", float(self.period))

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def nearest_index(self, x: float) -> int:
        """Index of the node closest to ``x`` (periodically)."""
        return int(round((x % self.period) / self.spacing)) % self.n


def make_grid(n: int, period: float = TWO_PI) -> PeriodicGrid:
    return PeriodicGrid(n, period)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Finite real values attached to the nodes of a :class:`PeriodicGrid`.

    The value array is copied and frozen on construction.
    """

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.shape[0] != self.grid.n:
            raise ValueError(f"expected {self.grid.n} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: PeriodicGrid, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.broadcast_to(f(grid.nodes), (grid.n,)))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.n, float(value)))

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __add__(self, other) -> "GridFunction":
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other) -> "GridFunction":
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - float(other))

    def __len__(self) -> int:
        return self.grid.n

    def __repr__(self) -> str:
        v = self.values
        return f"GridFunction(n={self.grid.n}, min={v.min():.6g}, max={v.max():.6g})"


def _check_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def _fractional_index(grid: PeriodicGrid, x: np.ndarray) -> np.ndarray:
    s = np.mod(x, grid.period) / grid.spacing
    # Snap rounding noise onto nodes so nodal evaluation is exact.
    near = np.rint(s)
    return np.where(np.abs(s - near) <= 1e-9, near, s)


def interpolate(f: GridFunction, x):
    """Periodic piecewise-linear interpolant of ``f`` evaluated at ``x``.

    Accepts a scalar or an array; the result has the same shape.
    """
    s = _fractional_index(f.grid, np.asarray(x, dtype=float))
    if s.ndim == 0:
        return float(interp_index(f.values, float(s)))
    flat = np.ascontiguousarray(s.reshape(-1))
    out = np.empty_like(flat)
    interp_many(f.values, flat, out)
    return out.reshape(s.shape)


def sup_diff(f: GridFunction, g: GridFunction) -> float:
    """Maximum nodewise absolute difference."""
    _check_same_grid(f, g)
    return float(np.max(np.abs(f.values - g.values)))


def write_csv(f: GridFunction, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv_text(f), newline="\n")
    return path


def to_csv_text(f: GridFunction) -> str:
    buf = io.StringIO()
    buf.write("x,value\n")
    for xi, vi in zip(f.x, f.values):
        buf.write(f"{xi:.17g},{vi:.17g}\n")
    return buf.getvalue()


def read_csv(path, period: float | None = None) -> GridFunction:
    """Read a two-column ``x,value`` file written by :func:`write_csv`.

    The period is inferred from the node spacing unless given.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "x,value":
        raise ValueError(f"{path}: missing 'x,value' header")
    data = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:] if ln.strip()])
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    n = data.shape[0]
    if period is None:
        period = n * (data[1, 0] - data[0, 0])
        if math.isclose(period, TWO_PI, rel_tol=1e-12):
            period = TWO_PI
    return GridFunction(PeriodicGrid(n, period), data[:, 1])

"""Deterministic JSON reports and dependency-free SVG line plots."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

SIGNIFICANT_DIGITS = 12


def normalize(obj):
    """Recursively convert to JSON-ready values, rounding floats to 12 significant digits."""
    if isinstance(obj, Mapping):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(obj, complex):
        return {"re": normalize(obj.real), "im": normalize(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def render_report(experiment: str, results: Mapping | None = None) -> str:
    body = {"experiment": experiment}
    if results:
        body.update(results)
    return json.dumps(normalize(body), sort_keys=True, indent=2) + "\n"


def emit_report(path, experiment: str, results: Mapping | None = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_report(experiment, results))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


_COLORS = ("#1f4e99", "#c2410c", "#15803d", "#7e22ce")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def line_plot_svg(
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    *,
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "u",
    width: int = 640,
    height: int = 400,
) -> str:
    """Static SVG with one polyline per series, axes, ticks and a legend."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    left, right, top, bottom = 70, 20, 40, 55
    pw, ph = width - left - right, height - top - bottom
    xmin, xmax = float(x.min()), float(x.max())
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()])
    ymin, ymax = float(allv.min()), float(allv.max())
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    def sx(v):
        return left + (v - xmin) / (xmax - xmin) * pw

    def sy(v):
        return top + (ymax - v) / (ymax - ymin) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for t in _ticks(xmin, xmax):
        X = sx(t)
        parts.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="#333"/>')
        parts.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ymin, ymax):
        Y = sy(t)
        parts.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="#333"/>')
        parts.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{t:g}</text>')
    for k, (label, y) in enumerate(ys.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        color = _COLORS[k % len(_COLORS)]
        dash = ' stroke-dasharray="6,4"' if k else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        ly = top + 16 + 16 * k
        parts.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 95}" y2="{ly}" stroke="{color}"{dash}/>')
        parts.append(f'<text x="{left + pw - 90}" y="{ly + 4}">{_escape(label)}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{_escape(xlabel)}</text>')
    parts.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 18 {top + ph / 2})">'
        f"{_escape(ylabel)}</text>"
    )
    if title:
        parts.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, x, series, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(line_plot_svg(x, series, **kwargs))
    return path

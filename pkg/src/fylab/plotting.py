"""Minimal deterministic SVG line charts from metric CSVs."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 20, 20, 50
N_TICKS = 5
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


class PlotError(ValueError):
    pass


def _read_columns(csv_path: Path, columns) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for c in columns:
            if c not in header:
                raise PlotError(f"column {c!r} not found in {csv_path} (have {', '.join(header)})")
        rows = list(reader)
    if not rows:
        raise PlotError(f"{csv_path} has no data rows")

    def num(v: str) -> float:
        try:
            return float(v)
        except ValueError:
            return math.nan

    ys = {c: np.array([num(r[c]) for r in rows]) for c in columns}
    if "step" in header:
        xs = np.array([num(r["step"]) for r in rows])
    else:
        xs = np.arange(len(rows), dtype=np.float64)
    return xs, ys


def _range(values: np.ndarray) -> tuple[float, float]:
    v = values[np.isfinite(values)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        pad = 0.5 if lo == 0 else 0.05 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e4 else f"{v:.3g}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def plot_svg(csv_path, columns, out_path) -> Path:
    """One polyline per column against ``step`` (or the row index)."""
    csv_path, out_path = Path(csv_path), Path(out_path)
    columns = list(columns)
    if not columns:
        raise PlotError("no columns requested")
    xs, ys = _read_columns(csv_path, columns)

    x0, x1 = _range(xs)
    y0, y1 = _range(np.concatenate(list(ys.values())))
    pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(x: float) -> float:
        return MARGIN_LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return MARGIN_TOP + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(N_TICKS):
        tx = x0 + (x1 - x0) * i / (N_TICKS - 1)
        ty = y0 + (y1 - y0) * i / (N_TICKS - 1)
        px, py = _fmt(sx(tx)), _fmt(sy(ty))
        base = MARGIN_TOP + ph
        out.append(f'<line class="xtick" x1="{px}" y1="{base}" x2="{px}" y2="{base + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{base + 18}" text-anchor="middle">{_tick_label(tx)}</text>')
        out.append(f'<line class="ytick" x1="{MARGIN_LEFT - 5}" y1="{py}" x2="{MARGIN_LEFT}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">'
                   f'{_tick_label(ty)}</text>')
    xlabel = "step"
    out.append(f'<text x="{MARGIN_LEFT + pw / 2:g}" y="{HEIGHT - 10}" text-anchor="middle">{xlabel}</text>')

    for j, c in enumerate(columns):
        color = PALETTE[j % len(PALETTE)]
        ok = np.isfinite(xs) & np.isfinite(ys[c])
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs[ok], ys[c][ok]))
        out.append(f'<polyline data-column="{c}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_TOP + 14 + 14 * j
        lx = MARGIN_LEFT + pw - 120
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" dominant-baseline="middle">{c}</text>')
    out.append("</svg>")

    out_path.write_text("\n".join(out) + "\n")
    return out_path

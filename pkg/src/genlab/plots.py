"""Dependency-free SVG line and scatter plots of sweep rows.

Output is byte-deterministic: coordinates are printed with fixed precision
and series are emitted in a fixed order. Training-set series are drawn
solid, test-set series dashed.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .runner import SweepResultRow, median_by_width

PLOT_KINDS = ("divergence_vs_width", "gap_vs_width", "frechet_vs_divergence")

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 200, 30, 55
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
DASH = "6,4"


class PlotError(ValueError):
    pass


# (label, column, color index, dashed)
_DIVERGENCE_SERIES = [
    ("original train1", "orig_train1", 0, False),
    ("original test", "orig_test", 0, True),
    ("auxiliary train1", "aux_train1", 1, False),
    ("auxiliary test", "aux_test", 1, True),
    ("indep. matching train1", "indep_match_train1", 2, False),
    ("indep. matching test", "indep_match_test", 2, True),
    ("indep. baseline train1", "indep_base_train1", 3, False),
    ("indep. baseline test", "indep_base_test", 3, True),
]

_GAP_SERIES = [
    ("generator gap (baseline)", "generator_gap", 3, False),
    ("generator gap (matching)", "_match_gap", 2, False),
    ("original train1 - test", "_orig_gap", 0, True),
]

_SCATTER_SERIES = [
    ("train1", "indep_base_train1", "frechet_train1", 0, False),
    ("test", "indep_base_test", "frechet_test", 1, True),
]


def _derived(r: SweepResultRow, column: str) -> float:
    if column == "_match_gap":
        return r.indep_match_train2 - r.indep_match_train1
    if column == "_orig_gap":
        return r.orig_train1 - r.orig_test
    return getattr(r, column)


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def _series_by_width(rows, column: str) -> list[tuple[float, float]]:
    med = median_by_width(rows, lambda r: _derived(r, column))
    return [(math.log2(w), v) for w, v in med.items() if _finite(v)]


class _Axes:
    def __init__(self, xs, ys):
        self.x0, self.x1 = _padded(xs)
        self.y0, self.y1 = _padded(ys)

    def px(self, x: float) -> float:
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)

    def py(self, y: float) -> float:
        return HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)


def _padded(vals) -> tuple[float, float]:
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.1, 0.5)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _f(v: float) -> str:
    return f"{v:.3f}"


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str, log2_ticks: bool) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    x_lo, x_hi = LEFT, WIDTH - RIGHT
    y_lo, y_hi = HEIGHT - BOTTOM, TOP
    out.append(f'<line x1="{x_lo}" y1="{y_lo}" x2="{x_hi}" y2="{y_lo}" stroke="black"/>')
    out.append(f'<line x1="{x_lo}" y1="{y_lo}" x2="{x_lo}" y2="{y_hi}" stroke="black"/>')
    for i in range(5):
        xv = ax.x0 + (ax.x1 - ax.x0) * (i + 0.5) / 5
        yv = ax.y0 + (ax.y1 - ax.y0) * (i + 0.5) / 5
        xl = f"{2 ** xv:.3g}" if log2_ticks else f"{xv:.3g}"
        out.append(f'<text class="tick" x="{_f(ax.px(xv))}" y="{y_lo + 16}" text-anchor="middle">{xl}</text>')
        out.append(f'<text class="tick" x="{x_lo - 6}" y="{_f(ax.py(yv) + 4)}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{(x_lo + x_hi) / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{(y_lo + y_hi) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y_lo + y_hi) / 2:.1f})">{escape(ylabel)}</text>'
    )
    return out


def _legend(entries) -> list[str]:
    out = ['<g class="legend">']
    x = WIDTH - RIGHT + 15
    for i, (label, color, dashed) in enumerate(entries):
        y = TOP + 10 + 18 * i
        dash = f' stroke-dasharray="{DASH}"' if dashed else ""
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 24}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{x + 30}" y="{y + 4}">{escape(label)}</text>')
    out.append("</g>")
    return out


def _series_svg(label: str, pts, color: str, dashed: bool, ax: _Axes, connect: bool = True) -> list[str]:
    dash = f' stroke-dasharray="{DASH}"' if dashed else ""
    out = [f'<g class="series" data-label="{escape(label)}">']
    if connect and len(pts) >= 2:
        coords = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
    fill = "white" if dashed else color
    for x, y in pts:
        out.append(
            f'<circle cx="{_f(ax.px(x))}" cy="{_f(ax.py(y))}" r="3.5" fill="{fill}" stroke="{color}"{dash}/>'
        )
    out.append("</g>")
    return out


def render_svg(rows, kind: str) -> str:
    if kind not in PLOT_KINDS:
        raise PlotError(f"unknown plot kind {kind!r}; expected one of {list(PLOT_KINDS)}")
    rows = list(rows)
    if not rows:
        raise PlotError("nothing to plot: no rows")
    series = []
    if kind == "frechet_vs_divergence":
        for label, xc, yc, ci, dashed in _SCATTER_SERIES:
            pts = sorted(
                (getattr(r, xc), getattr(r, yc))
                for r in rows
                if r.status == "ok" and _finite(getattr(r, xc)) and _finite(getattr(r, yc))
            )
            series.append((label, pts, PALETTE[ci], dashed))
        title, xlabel, ylabel, log2 = "Frechet metric vs baseline independent divergence", "divergence", "Frechet distance", False
    else:
        spec = _DIVERGENCE_SERIES if kind == "divergence_vs_width" else _GAP_SERIES
        for label, column, ci, dashed in spec:
            series.append((label, _series_by_width(rows, column), PALETTE[ci], dashed))
        if kind == "divergence_vs_width":
            title, ylabel = "Divergence vs critic width (median over seeds)", "divergence"
        else:
            title, ylabel = "Generalization gaps vs critic width (median over seeds)", "gap"
        xlabel, log2 = "critic width (log2 scale)", True
    xs = [x for _, pts, *_ in series for x, _ in pts]
    ys = [y for _, pts, *_ in series for _, y in pts]
    ax = _Axes(xs, ys)
    parts = ['<?xml version="1.0" encoding="UTF-8"?>']
    parts += _frame(ax, title, xlabel, ylabel, log2)
    scatter = kind == "frechet_vs_divergence"
    for label, pts, color, dashed in series:
        parts += _series_svg(label, pts, color, dashed, ax, connect=not scatter)
    parts += _legend([(label, color, dashed) for label, _, color, dashed in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg_plot(rows, kind: str, path) -> None:
    text = render_svg(rows, kind)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))

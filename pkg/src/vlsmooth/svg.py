"""Minimal hand-written SVG line and scatter charts with a fixed viewbox."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 56


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _frame(xlo, xhi, ylo, yhi, title, xlabel, ylabel, log_y):
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - xlo) / (xhi - xlo if xhi > xlo else 1.0) * pw

    def sy(y):
        return HEIGHT - MARGIN - (y - ylo) / (yhi - ylo if yhi > ylo else 1.0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{MARGIN / 2:.1f}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(xlo, xhi):
        parts.append(f'<text x="{sx(t):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    for t in _ticks(ylo, yhi):
        label = f"1e{t:.2g}" if log_y else f"{t:.3g}"
        parts.append(f'<text x="{MARGIN - 6}" y="{sy(t) + 3:.1f}" text-anchor="end" font-size="10">{label}</text>')
    return parts, sx, sy


def _limits(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def line_chart(x, series: dict, title="", xlabel="", ylabel="") -> str:
    """One polyline per named series over a shared x grid."""
    x = np.asarray(x, dtype=float)
    xlo, xhi = _limits(x)
    ylo, yhi = _limits(np.concatenate([np.asarray(s, dtype=float) for s in series.values()]))
    parts, sx, sy = _frame(xlo, xhi, ylo, yhi, title, xlabel, ylabel, False)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    for i, (name, y) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, np.asarray(y, dtype=float)))
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 + 14 * i}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_chart(x, y, title="", xlabel="", ylabel="", log_y=False, floor=1e-12) -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if log_y:
        y = np.log10(np.maximum(y, floor))
    xlo, xhi = _limits(x)
    ylo, yhi = _limits(y)
    parts, sx, sy = _frame(xlo, xhi, ylo, yhi, title, xlabel, ylabel, log_y)
    for a, b in zip(x, y):
        if math.isfinite(a) and math.isfinite(b):
            parts.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2" fill="#1f77b4" fill-opacity="0.6"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

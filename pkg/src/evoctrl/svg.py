"""Minimal SVG line and scatter-color plots for experiment artifacts."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 400, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _scale(v, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (np.asarray(v, float) - lo) / span * (b - a)


def _frame(title: str, xlim, ylim) -> list[str]:
    x0, x1 = PAD, WIDTH - PAD
    y0, y1 = HEIGHT - PAD, PAD
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">'
        f'{escape(title)}</text>',
    ]
    for val, anchor, x, y in ((xlim[0], "start", x0, y0 + 16), (xlim[1], "end", x1, y0 + 16)):
        out.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="11">{val:.4g}</text>')
    for val, y in ((ylim[0], y0), (ylim[1], y1 + 10)):
        out.append(f'<text x="{x0 - 4}" y="{y}" text-anchor="end" font-size="11">{val:.4g}</text>')
    return out


def line_plot(path, t, series: dict, title: str = "") -> None:
    """One polyline per entry of ``series`` (name -> values over ``t``)."""
    t = np.asarray(t, float)
    ys = [np.asarray(v, float) for v in series.values()]
    lo = min(float(np.min(v)) for v in ys)
    hi = max(float(np.max(v)) for v in ys)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    xlim = (float(t[0]), float(t[-1]))
    out = _frame(title, xlim, (lo, hi))
    X = _scale(t, *xlim, PAD, WIDTH - PAD)
    for k, (name, v) in enumerate(series.items()):
        Y = _scale(v, lo, hi, HEIGHT - PAD, PAD)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{WIDTH - PAD - 4}" y="{PAD + 14 * (k + 1)}" text-anchor="end" '
                   f'font-size="11" fill="{color}">{escape(str(name))}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def field_plot(path, xy, values, title: str = "", radius: float = 4.0) -> None:
    """Colored dots at the points ``xy`` (blue low, red high)."""
    xy = np.asarray(xy, float)
    v = np.asarray(values, float)
    lo, hi = float(np.min(v)), float(np.max(v))
    xlim = (float(xy[:, 0].min()), float(xy[:, 0].max()))
    ylim = (float(xy[:, 1].min()), float(xy[:, 1].max()))
    out = _frame(title, xlim, ylim)
    X = _scale(xy[:, 0], *xlim, PAD, WIDTH - PAD)
    Y = _scale(xy[:, 1], *ylim, HEIGHT - PAD, PAD)
    s = _scale(v, lo, hi, 0.0, 1.0) if hi > lo else np.zeros_like(v)
    for a, b, c in zip(X, Y, s):
        r, g = int(255 * c), int(255 * (1 - abs(2 * c - 1)))
        out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{radius}" '
                   f'fill="rgb({r},{g},{255 - r})"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")

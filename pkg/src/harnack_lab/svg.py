"""Minimal SVG line plots written as plain text."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 80, 150, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / count))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= count:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def _range(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo < 1e-300 + 1e-12 * max(abs(lo), abs(hi)):
        pad = max(abs(lo), 1.0) * 1e-6
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(path, lines: dict, title="", xlabel="", ylabel=""):
    """Write ``{label: [(x, y), ...]}`` as an SVG line chart."""
    series = {k: np.asarray(v, float).reshape(-1, 2) for k, v in lines.items() if len(v)}
    pts = np.vstack(list(series.values())) if series else np.zeros((1, 2))
    pts = pts[np.all(np.isfinite(pts), axis=1)] if np.isfinite(pts).any() else np.zeros((1, 2))
    x0, x1 = _range(pts[:, 0])
    y0, y1 = _range(pts[:, 1])
    pw, ph = WIDTH - PAD_L - PAD_R, HEIGHT - PAD_T - PAD_B

    def sx(x):
        return PAD_L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return PAD_T + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{PAD_T + ph}" x2="{sx(t):.2f}" y2="{PAD_T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{PAD_T + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{PAD_L - 4}" y1="{sy(t):.2f}" x2="{PAD_L}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{PAD_L - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{PAD_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{PAD_T + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {PAD_T + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, xy) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        xy = xy[np.all(np.isfinite(xy), axis=1)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in xy)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in xy:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2" fill="{color}"/>')
        ly = PAD_T + 14 * (i + 1)
        out.append(f'<line x1="{PAD_L + pw + 10}" y1="{ly - 4}" x2="{PAD_L + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{PAD_L + pw + 32}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")

"""Minimal self-contained SVG line chart with a shaded min-max band."""

from __future__ import annotations

from html import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 400, 56


def band_chart(t, mean, lo, hi, title: str, ylabel: str, logx: bool = True) -> str:
    t = np.asarray(t, dtype=float)
    mean, lo, hi = (np.asarray(a, dtype=float) for a in (mean, lo, hi))
    keep = np.isfinite(mean) & np.isfinite(lo) & np.isfinite(hi) & (t > 0)
    t, mean, lo, hi = t[keep], mean[keep], lo[keep], hi[keep]
    if len(t) == 0:
        raise ValueError("nothing to plot")
    xs = np.log10(t) if logx else t
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(lo.min()), float(hi.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    def path(xv, yv):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xv, yv))

    band = path(np.concatenate([xs, xs[::-1]]), np.concatenate([hi, lo[::-1]]))
    xlab = "log10(t)" if logx else "t"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>',
        f'<polyline points="{path(xs, mean)}" fill="none" stroke="#08519c" stroke-width="1.5"/>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{PAD / 2}" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{xlab}</text>',
        f'<text x="14" y="{HEIGHT / 2}" transform="rotate(-90 14 {HEIGHT / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{px(xv):.1f}" y="{HEIGHT - PAD + 16}" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{PAD - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

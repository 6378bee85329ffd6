"""Tiny deterministic SVG writer for report figures (no plotting dependency).

Output bytes are a pure function of the numeric inputs: fixed layout, fixed
formatting, no timestamps.
"""
from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v) -> str:
    return f"{float(v):.6g}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, count)
    return raw


def line_chart(series, labels=None, title="", xlabel="", ylabel="",
               width=640, height=400) -> str:
    """Polyline chart; ``series`` is a list of (xs, ys) pairs."""
    ml, mr, mt, mb = 56, 16, 28, 44
    iw, ih = width - ml - mr, height - mt - mb
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0 -= pad; y1 += pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * iw

    def sy(v):
        return mt + ih - (v - y0) / (y1 - y0) * ih

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{width/2:.1f}" y="18" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{title}</text>')
    parts.append(f'<rect x="{ml}" y="{mt}" width="{iw}" height="{ih}" '
                 f'fill="none" stroke="#444" stroke-width="1"/>')
    for tv in _ticks(x0, x1):
        px = sx(tv)
        parts.append(f'<line x1="{px:.2f}" y1="{mt+ih}" x2="{px:.2f}" y2="{mt+ih+4}" stroke="#444"/>')
        parts.append(f'<text x="{px:.2f}" y="{mt+ih+16}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{_fmt(tv)}</text>')
    for tv in _ticks(y0, y1):
        py = sy(tv)
        parts.append(f'<line x1="{ml-4}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#444"/>')
        parts.append(f'<text x="{ml-7}" y="{py+3:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{_fmt(tv)}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + iw/2:.1f}" y="{height-8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="14" y="{mt + ih/2:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11" '
                     f'transform="rotate(-90 14 {mt + ih/2:.1f})">{ylabel}</text>')
    for k, (xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"/>')
        if labels and k < len(labels):
            ly = mt + 14 + 14 * k
            parts.append(f'<line x1="{ml+iw-86}" y1="{ly-4}" x2="{ml+iw-66}" y2="{ly-4}" '
                         f'stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{ml+iw-60}" y="{ly}" font-family="sans-serif" '
                         f'font-size="11">{labels[k]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(matrix, labels=None, title="", width=420, height=380) -> str:
    """Annotated square heatmap with a symmetric blue-white-red scale."""
    M = np.asarray(matrix, dtype=float)
    n, m = M.shape
    ml, mt, mb, mr = 70, 40, 24, 20
    cw = (width - ml - mr) / m
    ch = (height - mt - mb) / n
    vmax = max(float(np.max(np.abs(M))), 1e-12)

    def color(v):
        t = max(-1.0, min(1.0, v / vmax))
        if t >= 0:
            r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
        else:
            r, g, b = int(255 * (1 + t)), int(255 * (1 + t)), 255
        return f"rgb({r},{g},{b})"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{width/2:.1f}" y="20" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{title}</text>')
    for i in range(n):
        for j in range(m):
            x = ml + j * cw
            y = mt + i * ch
            parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                         f'fill="{color(M[i, j])}" stroke="#666" stroke-width="0.5"/>')
            parts.append(f'<text x="{x + cw/2:.2f}" y="{y + ch/2 + 4:.2f}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="12">{_fmt(M[i, j])}</text>')
    if labels:
        for j, lab in enumerate(labels[:m]):
            parts.append(f'<text x="{ml + j*cw + cw/2:.2f}" y="{mt - 8}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="11">{lab}</text>')
        for i, lab in enumerate(labels[:n]):
            parts.append(f'<text x="{ml - 8}" y="{mt + i*ch + ch/2 + 4:.2f}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="11">{lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

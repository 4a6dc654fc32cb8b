"""Bare-bones SVG line plots (no plotting library needed)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _panel(series: np.ndarray, x0: float, y0: float, w: float, h: float, title: str) -> list[str]:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    lo, hi = float(series.min()), float(series.max())
    if hi == lo:
        hi, lo = hi + 0.5, lo - 0.5
    n = max(series.shape[0] - 1, 1)
    out = [
        f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{w:.1f}" height="{h:.1f}" fill="none" stroke="#999"/>',
        f'<text x="{x0 + 4:.1f}" y="{y0 - 4:.1f}" font-size="11" font-family="sans-serif">{escape(title)}</text>',
    ]
    for j in range(series.shape[1]):
        col = series[:, j]
        pts = " ".join(
            f"{x0 + w * i / n:.2f},{y0 + h - h * (v - lo) / (hi - lo):.2f}" for i, v in enumerate(col)
        )
        out.append(f'<polyline fill="none" stroke-width="1" stroke="{_COLORS[j % len(_COLORS)]}" points="{pts}"/>')
    return out


def two_row_plot(top: np.ndarray, bottom: np.ndarray, title: str, top_label: str, bottom_label: str) -> str:
    """Stacked panels: ``top`` above ``bottom``, each column one line."""
    w, h, pad = 640.0, 200.0, 30.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + 2 * pad:.0f}" height="{2 * h + 4 * pad:.0f}">',
        f'<text x="{pad:.1f}" y="16" font-size="13" font-family="sans-serif">{escape(title)}</text>',
    ]
    parts += _panel(top, pad, 2 * pad, w, h, top_label)
    parts += _panel(bottom, pad, 3 * pad + h, w, h, bottom_label)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

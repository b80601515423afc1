"""Minimal SVG line charts for signal matrices, one stacked panel per row.

No plotting dependency; output bytes are a pure function of the data, so
repeated runs produce identical files.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH = 840
_PANEL_HEIGHT = 130
_MARGIN_LEFT = 14
_MARGIN_RIGHT = 14
_TITLE_HEIGHT = 28
_PANEL_PAD = 18


def _polyline(t: np.ndarray, row: np.ndarray, x0: float, y0: float,
              width: float, height: float) -> str:
    t_span = t[-1] - t[0] if t[-1] > t[0] else 1.0
    lo, hi = float(row.min()), float(row.max())
    span = hi - lo if hi > lo else 1.0
    xs = x0 + (t - t[0]) / t_span * width
    ys = y0 + height - (row - lo) / span * height
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def render_waveforms_svg(t: np.ndarray, matrix: np.ndarray,
                         labels: Sequence[str], title: str) -> str:
    """One panel per matrix row, each autoscaled to its own range."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != t.shape[0]:
        raise ShapeError(f"matrix {matrix.shape} does not match time axis "
                         f"of length {t.shape[0]}")
    if len(labels) != matrix.shape[0]:
        raise ShapeError("one label per row required")

    n_rows = matrix.shape[0]
    total_height = _TITLE_HEIGHT + n_rows * (_PANEL_HEIGHT + _PANEL_PAD)
    plot_width = _WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{total_height}" viewBox="0 0 {_WIDTH} {total_height}">',
        f'<text x="{_MARGIN_LEFT}" y="19" font-family="sans-serif" '
        f'font-size="15" font-weight="bold">{title}</text>',
    ]
    for k in range(n_rows):
        y0 = _TITLE_HEIGHT + k * (_PANEL_HEIGHT + _PANEL_PAD)
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<rect x="{_MARGIN_LEFT}" y="{y0}" width="{plot_width}" '
                     f'height="{_PANEL_HEIGHT}" fill="none" stroke="#cccccc"/>')
        parts.append(f'<text x="{_MARGIN_LEFT + 6}" y="{y0 + 16}" '
                     f'font-family="sans-serif" font-size="12">{labels[k]}</text>')
        points = _polyline(t, matrix[k], _MARGIN_LEFT, y0, plot_width,
                           _PANEL_HEIGHT)
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_waveforms_svg(path: str, t: np.ndarray, matrix: np.ndarray,
                        labels: Sequence[str], title: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_waveforms_svg(t, matrix, labels, title))

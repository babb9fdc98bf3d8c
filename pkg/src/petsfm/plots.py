"""Bare-bones SVG rendering for matrices and bar charts."""

from __future__ import annotations

from html import escape

import numpy as np

_PALETTE = ["#3b6fb6", "#d9822b", "#3f9c5a", "#b03a48"]


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def heatmap(m: np.ndarray, row_labels, col_labels, title: str = "", cell: int = 48) -> str:
    m = np.asarray(m, dtype=float)
    lo, hi = float(m.min()), float(m.max())
    span = hi - lo or 1.0
    left, top = 90, 40
    rows, cols = m.shape
    body = [f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>']
    for i in range(rows):
        body.append(
            f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 4}" text-anchor="end">{escape(str(row_labels[i]))}</text>'
        )
        for j in range(cols):
            t = (m[i, j] - lo) / span
            shade = int(round(255 * (1 - t)))
            color = f"rgb({shade},{shade},255)"
            x, y = left + j * cell, top + i * cell
            ink = "white" if t > 0.6 else "black"
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}" stroke="#888"/>')
            body.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle" fill="{ink}">{m[i, j]:.3g}</text>'
            )
    for j in range(cols):
        body.append(
            f'<text x="{left + j * cell + cell / 2}" y="{top + rows * cell + 16}" text-anchor="middle">{escape(str(col_labels[j]))}</text>'
        )
    return _svg(left + cols * cell + 20, top + rows * cell + 30, body)


def grouped_bars(categories, series: dict[str, list[float]], title: str = "", bar: int = 10) -> str:
    names = list(series)
    vals = np.array([series[k] for k in names], dtype=float)
    peak = float(vals.max()) if vals.size and vals.max() > 0 else 1.0
    left, top, plot_h = 50, 40, 200
    group = bar * len(names) + 6
    body = [f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>']
    for gi, cat in enumerate(categories):
        x0 = left + gi * group
        for si in range(len(names)):
            h = plot_h * vals[si, gi] / peak
            body.append(
                f'<rect x="{x0 + si * bar}" y="{top + plot_h - h:.2f}" width="{bar - 1}" height="{h:.2f}" '
                f'fill="{_PALETTE[si % len(_PALETTE)]}"/>'
            )
        body.append(
            f'<text x="{x0 + group / 2}" y="{top + plot_h + 12}" text-anchor="end" '
            f'transform="rotate(-60 {x0 + group / 2} {top + plot_h + 12})">{escape(str(cat))}</text>'
        )
    for si, name in enumerate(names):
        y = top + si * 14
        x = left + len(categories) * group + 10
        body.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{_PALETTE[si % len(_PALETTE)]}"/>')
        body.append(f'<text x="{x + 14}" y="{y + 9}">{escape(name)}</text>')
    return _svg(left + len(categories) * group + 110, top + plot_h + 70, body)


def bars(labels, values, title: str = "") -> str:
    return grouped_bars(labels, {"value": list(values)}, title, bar=22)

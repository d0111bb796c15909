"""Minimal SVG emission for line plots and heatmaps (no plotting dependency)."""
from __future__ import annotations

from typing import Dict, Sequence

import numpy as np

W, H, PAD = 640, 400, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _scale(v, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    f = lambda v: format(v, ".4g")
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
        f'fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle">{title}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="12" y="{H / 2}" transform="rotate(-90 12 {H / 2})" '
        f'text-anchor="middle">{ylabel}</text>',
        f'<text x="{PAD}" y="{H - PAD + 15}">{f(x0)}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 15}" text-anchor="end">{f(x1)}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end">{f(y0)}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 10}" text-anchor="end">{f(y1)}</text>',
    ]


def line_plot(path, x, series: Dict[str, Sequence[float]], title="", xlabel="", ylabel=""):
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    y0, y1 = float(finite.min()), float(finite.max())
    x0, x1 = float(x.min()), float(x.max())
    out = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    px = _scale(x, x0, x1, PAD, W - PAD)
    for i, (name, y) in enumerate(ys.items()):
        py = _scale(y, y0, y1, H - PAD, PAD)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py) if np.isfinite(b))
        c = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        out.append(f'<text x="{W - PAD - 4}" y="{PAD + 16 + 14 * i}" text-anchor="end" '
                   f'fill="{c}">{name}</text>')
    out.append("</svg>")
    _write(path, out)


def heatmap(path, values, x_range, y_range, title="", xlabel="", ylabel=""):
    """values[i, j] drawn with i along x and j along y, grey scale over [min, max]."""
    v = np.asarray(values, dtype=float)
    nx, ny = v.shape
    lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
    out = _frame(title, xlabel, ylabel, x_range[0], x_range[1], y_range[0], y_range[1])
    cw, ch = (W - 2 * PAD) / nx, (H - 2 * PAD) / ny
    for i in range(nx):
        for j in range(ny):
            g = int(round(255 * float(_scale(v[i, j], lo, hi, 0.0, 1.0)))) if np.isfinite(v[i, j]) else 0
            out.append(f'<rect x="{PAD + i * cw:.2f}" y="{H - PAD - (j + 1) * ch:.2f}" '
                       f'width="{cw:.2f}" height="{ch:.2f}" fill="rgb({g},{g},{g})"/>')
    out.append(f'<text x="{W - PAD}" y="{PAD - 6}" text-anchor="end">'
               f'range {lo:.3g} .. {hi:.3g}</text>')
    out.append("</svg>")
    _write(path, out)


def _write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

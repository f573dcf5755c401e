"""Minimal deterministic SVG output: scatter/line panels and bar charts.

Coordinates are printed with fixed precision so identical data gives
identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _f(x: float) -> str:
    return f"{x:.2f}"


@dataclass
class Figure:
    width: int = 480
    height: int = 480
    margin: int = 40
    title: str = ""
    xlim: tuple | None = None
    ylim: tuple | None = None
    _items: list = field(default_factory=list)

    def scatter(self, pts, color="#1f77b4", r=2.0, opacity=1.0, marker="circle", label=None):
        self._items.append(("scatter", np.asarray(pts, float).reshape(-1, 2), color, r, opacity, marker, label))

    def line(self, pts, color="#555555", width=1.0, opacity=1.0, dash=None, label=None):
        self._items.append(("line", np.asarray(pts, float).reshape(-1, 2), color, width, opacity, dash, label))

    def _limits(self):
        pts = np.vstack([it[1] for it in self._items]) if self._items else np.zeros((1, 2))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.05 * max(float(np.max(hi - lo)), 1e-9)
        xlim = self.xlim or (lo[0] - pad, hi[0] + pad)
        ylim = self.ylim or (lo[1] - pad, hi[1] + pad)
        # equal aspect so geometry is not distorted
        span = max(xlim[1] - xlim[0], ylim[1] - ylim[0])
        cx, cy = sum(xlim) / 2, sum(ylim) / 2
        return (cx - span / 2, cx + span / 2), (cy - span / 2, cy + span / 2)

    def to_svg(self) -> str:
        (x0, x1), (y0, y1) = self._limits()
        w, h, m = self.width, self.height, self.margin
        sx = (w - 2 * m) / (x1 - x0)
        sy = (h - 2 * m) / (y1 - y0)

        def tx(p):
            return m + (p[:, 0] - x0) * sx, h - m - (p[:, 1] - y0) * sy

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" fill="none" stroke="#999999"/>',
        ]
        if self.title:
            out.append(f'<text x="{w / 2:.1f}" y="{m / 2 + 5:.1f}" text-anchor="middle" font-size="14" '
                       f'font-family="sans-serif">{escape(self.title)}</text>')
        out.append(f'<text x="{m}" y="{h - m / 4:.1f}" font-size="10" font-family="sans-serif">'
                   f'x [{_f(x0)}, {_f(x1)}]  y [{_f(y0)}, {_f(y1)}]</text>')
        legend = []
        for kind, pts, color, size, op, style, label in self._items:
            px, py = tx(pts)
            if kind == "line":
                coords = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px, py))
                dash = f' stroke-dasharray="{style}"' if style else ""
                out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{size}" '
                           f'stroke-opacity="{op}"{dash}/>')
            else:
                for a, b in zip(px, py):
                    if style == "cross":
                        d = size
                        out.append(f'<path d="M{_f(a - d)},{_f(b - d)}L{_f(a + d)},{_f(b + d)}M{_f(a - d)},'
                                   f'{_f(b + d)}L{_f(a + d)},{_f(b - d)}" stroke="{color}" stroke-width="2"/>')
                    else:
                        out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{size}" fill="{color}" '
                                   f'fill-opacity="{op}"/>')
            if label:
                legend.append((label, color))
        for i, (label, color) in enumerate(legend):
            y = m + 14 + 14 * i
            out.append(f'<rect x="{w - m - 110}" y="{y - 8}" width="8" height="8" fill="{color}"/>')
            out.append(f'<text x="{w - m - 98}" y="{y}" font-size="10" font-family="sans-serif">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def bar_chart(labels, values, title="", ylabel="", width=480, height=320, margin=50) -> str:
    """Vertical bars; ``None`` values are left empty."""
    vals = [0.0 if v is None else float(v) for v in values]
    top = max(vals + [1e-12]) * 1.1
    n = max(len(labels), 1)
    bw = (width - 2 * margin) / n
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" font-size="14" '
                   f'font-family="sans-serif">{escape(title)}</text>')
    if ylabel:
        out.append(f'<text x="12" y="{height / 2:.1f}" font-size="11" font-family="sans-serif" '
                   f'transform="rotate(-90 12 {height / 2:.1f})" text-anchor="middle">{escape(ylabel)}</text>')
    for i, (lab, v, raw) in enumerate(zip(labels, vals, values)):
        x = margin + i * bw + 0.15 * bw
        bh = (height - 2 * margin) * v / top
        color = PALETTE[i % len(PALETTE)]
        if raw is not None:
            out.append(f'<rect x="{_f(x)}" y="{_f(height - margin - bh)}" width="{_f(0.7 * bw)}" '
                       f'height="{_f(bh)}" fill="{color}"/>')
            out.append(f'<text x="{_f(x + 0.35 * bw)}" y="{_f(height - margin - bh - 4)}" font-size="10" '
                       f'text-anchor="middle" font-family="sans-serif">{v:.3g}</text>')
        out.append(f'<text x="{_f(x + 0.35 * bw)}" y="{height - margin + 14}" font-size="10" '
                   f'text-anchor="middle" font-family="sans-serif">{escape(str(lab))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

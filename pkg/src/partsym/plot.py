"""Static SVG scatter plots: three orthographic projections, parts color-coded."""

from __future__ import annotations

import numpy as np

from .geom import PointCloud

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
VIEWS = (("x", "y", 0, 1), ("x", "z", 0, 2), ("y", "z", 1, 2))


def render_svg(c: PointCloud, panel: int = 240, margin: int = 16, radius: float = 1.5, title: str = "") -> str:
    pts = c.points
    labels = c.labels if c.labels is not None else np.zeros(len(pts), dtype=int)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(np.max(hi - lo), 1e-12))
    mid = (lo + hi) / 2.0
    inner = panel - 2 * margin
    top = 20 if title else 0
    width, height = 3 * panel, panel + top + 16
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{margin}" y="15" font-family="sans-serif" font-size="12">{_escape(title)}</text>')
    for k, (hname, vname, hi_ax, vi_ax) in enumerate(VIEWS):
        x0 = k * panel
        out.append(
            f'<g transform="translate({x0},{top})">'
            f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#cccccc"/>'
            f'<text x="{panel / 2:.1f}" y="{panel + 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{hname}-{vname}</text>'
        )
        u = margin + inner * (0.5 + (pts[:, hi_ax] - mid[hi_ax]) / span)
        v = margin + inner * (0.5 - (pts[:, vi_ax] - mid[vi_ax]) / span)
        for j in np.unique(labels):
            sel = labels == j
            color = PALETTE[int(j) % len(PALETTE)]
            out.append(f'<g fill="{color}">')
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{radius}"/>' for a, b in zip(u[sel], v[sel]))
            out.append("</g>")
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

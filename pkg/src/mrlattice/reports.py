"""Report artifacts: f-value histograms and top-down trajectory SVGs.

Hand-rolled SVG keeps the output byte-deterministic, which the golden-file
tests rely on.
"""

from __future__ import annotations

import math

import numpy as np

from .core import State
from .search import sample_trajectory
from .world import VoxelWorld


class ReportError(RuntimeError):
    """Missing inputs for a requested report artifact."""


def f_histogram(f_values, bin_width: float):
    """Counts of f-values in [k*w, (k+1)*w) bins; returns (edges, counts)."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    vals = [v for v in f_values if math.isfinite(v)]
    if not vals:
        return np.zeros(1), np.zeros(0, dtype=int)
    idx = np.floor(np.asarray(vals) / bin_width).astype(int)
    idx = np.maximum(idx, 0)
    counts = np.bincount(idx)
    edges = np.arange(len(counts) + 1) * bin_width
    return edges, counts


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{edges[i]:.9g},{edges[i + 1]:.9g},{int(c)}\n")


def write_histogram_svg(path, edges, counts, width=640, height=360, label="") -> None:
    """Minimal bar chart of expansion counts per f-value bin."""
    counts = np.asarray(counts)
    margin = 40
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    top = max(int(counts.max()), 1) if counts.size else 1
    n = max(len(counts), 1)
    bar_w = plot_w / n
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin}" y="{margin - 12}" font-size="13">{label}</text>',
    ]
    for i, c in enumerate(counts):
        h = plot_h * (int(c) / top)
        x = margin + i * bar_w
        y = margin + plot_h - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w * 0.9:.2f}" height="{h:.2f}" '
            f'fill="#4878a8"/>'
        )
    parts.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>'
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


_STROKES = ("#c03028", "#202020", "#2860c0", "#209048", "#a060c0", "#c08020")


class SvgMap:
    """Affine world(x, y) -> viewport(px) map for top-down renders."""

    def __init__(self, world: VoxelWorld, size: int = 800, margin: int = 20):
        lo, hi = world.bounds()
        self.lo = lo
        self.hi = hi
        span = max(hi[0] - lo[0], hi[1] - lo[1])
        self.scale = (size - 2 * margin) / span
        self.margin = margin
        self.size = size

    def px(self, x: float, y: float):
        u = self.margin + (x - self.lo[0]) * self.scale
        v = self.size - self.margin - (y - self.lo[1]) * self.scale
        return u, v


def _height_color(h, zmax):
    """Purple (low) to blue (high)."""
    t = min(max(h / max(zmax, 1e-9), 0.0), 1.0)
    r = int(96 + (32 - 96) * t)
    g = int(32 + (96 - 32) * t)
    b = int(128 + (192 - 128) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def write_trajectory_svg(
    path,
    world: VoxelWorld,
    trajectories,  # list of (label, primitives, start State)
    goal,
    replan_marks=None,
    sample_dt: float = 0.05,
    size: int = 800,
) -> None:
    """Top-down view: height-colored boxes, trajectory polylines, start/goal marks."""
    m = SvgMap(world, size=size)
    zmax = world.altitude_range[1]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    lo_px = m.px(world.bounds()[0][0], world.bounds()[1][1])
    w_px = (world.bounds()[1][0] - world.bounds()[0][0]) * m.scale
    h_px = (world.bounds()[1][1] - world.bounds()[0][1]) * m.scale
    parts.append(
        f'<rect x="{lo_px[0]:.2f}" y="{lo_px[1]:.2f}" width="{w_px:.2f}" height="{h_px:.2f}" '
        f'fill="none" stroke="#808080"/>'
    )
    for b in world.boxes:
        x0, y0 = m.px(b.lo[0], b.hi[1])
        parts.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" '
            f'width="{(b.hi[0] - b.lo[0]) * m.scale:.2f}" '
            f'height="{(b.hi[1] - b.lo[1]) * m.scale:.2f}" '
            f'fill="{_height_color(b.hi[2], zmax)}"/>'
        )
    start_pos = None
    for k, (label, prims, start) in enumerate(trajectories):
        if start_pos is None:
            start_pos = start.position
        pts = sample_trajectory(prims, start, sample_dt)
        coords = " ".join(f"{m.px(p[0], p[1])[0]:.2f},{m.px(p[0], p[1])[1]:.2f}" for p in pts)
        stroke = _STROKES[k % len(_STROKES)]
        parts.append(
            f'<polyline id="traj-{_slug(label)}" points="{coords}" fill="none" '
            f'stroke="{stroke}" stroke-width="2"/>'
        )
    if replan_marks:
        for p in replan_marks:
            u, v = m.px(p[0], p[1])
            parts.append(
                f'<rect x="{u - 3:.2f}" y="{v - 3:.2f}" width="6" height="6" fill="#c03028"/>'
            )
    if start_pos is not None:
        u, v = m.px(start_pos[0], start_pos[1])
        parts.append(f'<circle id="start" cx="{u:.2f}" cy="{v:.2f}" r="6" fill="#c03028"/>')
    if goal is not None:
        u, v = m.px(goal[0], goal[1])
        parts.append(
            f'<rect id="goal" x="{u - 5:.2f}" y="{v - 5:.2f}" width="10" height="10" '
            f'fill="#209048"/>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text)

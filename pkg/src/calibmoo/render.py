"""Dependency-free figures: SVG scatter of a front and PPM overlays of projected points."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from . import kernels
from .geometry import RigidTransform, project_cloud
from .objectives import nearest_sq
from .problem import CalibrationScene

WIDTH, HEIGHT = 640, 480
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom

GT_COLOR = (0, 220, 0)
CANDIDATE_COLOR = (255, 40, 40)


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def front_svg(objectives, knee=None, title: str = "Pareto front") -> str:
    """Scatter of (comp_cost, chamfer) pairs; chamfer uses a log axis when it spans >100x."""
    pts = np.asarray(objectives, dtype=np.float64).reshape(-1, 2)
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    if len(pts):
        cham = pts[:, 0]
        log = cham.min() > 0 and cham.max() / cham.min() > 100
        yv = np.log10(cham) if log else cham
        x0, x1 = float(pts[:, 1].min()), float(pts[:, 1].max())
        y0, y1 = float(yv.min()), float(yv.max())
        xs = x1 - x0 or 1.0
        ys = y1 - y0 or 1.0

        def px(c):
            return left + (c - x0) / xs * pw

        def py(v):
            return top + ph - (v - y0) / ys * ph

        out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for t in _ticks(x0, x1):
            out.append(f'<text x="{px(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:.3g}</text>')
        for t in _ticks(y0, y1):
            label = f"{10 ** t:.3g}" if log else f"{t:.3g}"
            out.append(f'<text x="{left - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{label}</text>')
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">comp_cost</text>')
        ylab = "chamfer (log scale)" if log else "chamfer"
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylab}</text>'
        )
        for cost, v in zip(pts[:, 1], yv):
            out.append(f'<circle cx="{px(cost):.2f}" cy="{py(v):.2f}" r="3" fill="#1f77b4"/>')
        if knee is not None:
            kc, kk = float(knee[0]), float(knee[1])
            kv = math.log10(kc) if log else kc
            out.append(
                f'<circle cx="{px(kk):.2f}" cy="{py(kv):.2f}" r="7" fill="none" stroke="#d62728" stroke-width="2"/>'
            )
            out.append(f'<text x="{px(kk) + 9:.1f}" y="{py(kv) - 9:.1f}" fill="#d62728">knee</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _stamp(rgb: np.ndarray, uv: np.ndarray, color) -> None:
    h, w = rgb.shape[:2]
    cols = np.rint(uv[:, 0]).astype(np.intp)
    rows = np.rint(uv[:, 1]).astype(np.intp)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = rows + dr, cols + dc
            ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            rgb[r[ok], c[ok]] = color


def lidar_edge_points(scene: CalibrationScene, transform: RigidTransform, depth_gap: float = 0.5,
                      foreground_only: bool = True) -> np.ndarray:
    """Pixel positions of the full scan's depth-jump points under ``transform``."""
    pts = scene.cloud.points
    ranges = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    flags = kernels.depth_gap_mask(ranges, depth_gap, foreground_only)
    proj = project_cloud(scene.cloud, transform, scene.intrinsics, scene.image_size)
    return proj.uv[flags[proj.index]]


def edge_coincidence(scene: CalibrationScene, transform: RigidTransform, tolerance: float = 1.0,
                     depth_gap: float = 0.5) -> float:
    """Fraction of projected LiDAR edge points within ``tolerance`` px of an image edge pixel."""
    uv = lidar_edge_points(scene, transform, depth_gap)
    if len(uv) == 0:
        return 0.0
    d2 = nearest_sq(uv, scene.gt_edges)
    return float(np.mean(d2 <= tolerance * tolerance))


def overlay_image(scene: CalibrationScene, candidate: RigidTransform, depth_gap: float = 0.5) -> np.ndarray:
    """(h, w, 3) uint8 image: ground-truth projection in green, candidate in red.

    Without a ground-truth transform only the candidate is drawn.
    """
    g = scene.image.data
    rgb = np.repeat((g // 2)[:, :, None], 3, axis=2).astype(np.uint8)
    if scene.ground_truth is not None:
        _stamp(rgb, lidar_edge_points(scene, scene.ground_truth, depth_gap), GT_COLOR)
    _stamp(rgb, lidar_edge_points(scene, candidate, depth_gap), CANDIDATE_COLOR)
    return rgb


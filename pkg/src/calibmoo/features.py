"""Edge and intensity point extraction from camera images and projected scans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import ProjectedPoints

DEFAULT_EDGE_THRESHOLD = 100.0
DEFAULT_DEPTH_GAP = 0.5
DEFAULT_INTENSITY_THRESHOLD = 200.0
EDGE_SIDES = ("both", "foreground")


@dataclass(frozen=True)
class GrayImage:
    """8-bit luminance image stored as a (height, width) uint8 array."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"image data has {arr.size} values, expected {self.width}x{self.height}"
            )
        arr = np.array(arr, dtype=np.uint8).reshape(self.height, self.width)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        a = np.asarray(arr)
        return cls(a.shape[1], a.shape[0], a)


@dataclass(frozen=True)
class EdgePointSet:
    """2-D pixel points (u, v) with optional per-point weights in [0, 1]."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(p)):
            raise ValueError("edge points must be finite")
        object.__setattr__(self, "points", p)
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64).reshape(-1)
            if w.shape[0] != p.shape[0]:
                raise ValueError("weights and points differ in length")
            if np.any(w < 0) or np.any(w > 1):
                raise ValueError("weights must lie in [0, 1]")
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "EdgePointSet":
        return cls(np.zeros((0, 2)))


def sobel_magnitude(img: GrayImage) -> np.ndarray:
    """Gradient magnitude of the interior pixels, shape (height-2, width-2)."""
    a = img.data.astype(np.float64)
    gx = (a[:-2, 2:] + 2 * a[1:-1, 2:] + a[2:, 2:]) - (a[:-2, :-2] + 2 * a[1:-1, :-2] + a[2:, :-2])
    gy = (a[2:, :-2] + 2 * a[2:, 1:-1] + a[2:, 2:]) - (a[:-2, :-2] + 2 * a[:-2, 1:-1] + a[:-2, 2:])
    return np.sqrt(gx * gx + gy * gy)


def extract_image_edges(img: GrayImage, threshold: float = DEFAULT_EDGE_THRESHOLD) -> EdgePointSet:
    """Pixels whose 3x3 Sobel gradient magnitude exceeds ``threshold``.

    Border pixels have no full neighbourhood and are never reported. Points
    come back in row-major order as (u=column, v=row).
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image {img.width}x{img.height} is smaller than 3x3")
    rows, cols = np.nonzero(sobel_magnitude(img) > threshold)
    return EdgePointSet(np.column_stack((cols + 1, rows + 1)).astype(np.float64))


def extract_lidar_edges(
    projected: ProjectedPoints,
    depth_gap: float = DEFAULT_DEPTH_GAP,
    side: str = "both",
) -> EdgePointSet:
    """Projected points on either side of a depth jump larger than ``depth_gap``.

    Neighbours are taken in scan order, i.e. the order of ``projected``.
    ``side="foreground"`` keeps only the nearer point of each jump, which
    lies on the occluding surface; the farther one sits on whatever is behind
    it and barely moves when the extrinsic translation changes.
    """
    if not depth_gap > 0:
        raise ValueError(f"depth_gap must be positive, got {depth_gap}")
    if side not in EDGE_SIDES:
        raise ValueError(f"unknown edge side {side!r}; expected one of {EDGE_SIDES}")
    if math.isinf(depth_gap):
        return EdgePointSet.empty()
    mask = kernels.depth_gap_mask(projected.depth, depth_gap, side == "foreground")
    return EdgePointSet(projected.uv[mask])


def extract_intensity_points(img: GrayImage, threshold: float = DEFAULT_INTENSITY_THRESHOLD) -> EdgePointSet:
    """Pixels at or above ``threshold`` luminance, weighted by luminance/255."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {threshold}")
    rows, cols = np.nonzero(img.data >= threshold)
    pts = np.column_stack((cols, rows)).astype(np.float64)
    return EdgePointSet(pts, img.data[rows, cols] / 255.0)


def extract_lidar_intensity_points(projected: ProjectedPoints, threshold: float) -> EdgePointSet:
    """Projected points whose reflectance is at least ``threshold`` (in [0, 1])."""
    if not 0 <= threshold <= 1:
        raise ValueError(f"reflectance threshold must lie in [0, 1], got {threshold}")
    keep = projected.intensity >= threshold
    return EdgePointSet(projected.uv[keep], projected.intensity[keep])

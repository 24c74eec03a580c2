"""Rigid transforms, Euler rotations and pinhole projection.

Conventions
-----------
* Rotations are built intrinsic Z-Y-X: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
* A :class:`RigidTransform` maps LiDAR-frame points into the camera frame,
  ``p_cam = R @ p + T``.
* Pixel ``u`` runs along image columns, ``v`` along rows. Only points with
  camera depth above :data:`MIN_DEPTH` are projected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels

MIN_DEPTH = 1e-6
NO_DATA = 0.0

_ORTHO_TOL = 1e-9


class BehindCameraError(ValueError):
    """Raised when projecting a point with non-positive camera depth."""


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


class PixelPoint(NamedTuple):
    u: float
    v: float
    depth: float | None = None


@dataclass(frozen=True)
class RigidTransform:
    """Rotation ``R`` (3x3) and translation ``T`` (metres)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal with det +1 (use from_matrix to project it)")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix, orthonormalize: bool = True) -> "RigidTransform":
        """Build from a 3x4 or 4x4 ``[R | T]`` matrix.

        Calibration files print rotations to a few decimals, so by default the
        rotation block is projected onto the nearest proper rotation (SVD).
        """
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise ValueError(f"expected a 3x4 or 4x4 matrix, got {m.shape}")
        r = m[:3, :3]
        if orthonormalize:
            r = nearest_rotation(r)
        return cls(r, m[:3, 3])

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    u0: float
    v0: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.u0, self.v0)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]])

    def projection_matrix(self) -> np.ndarray:
        """The 3x4 ``[K | 0]`` form."""
        return np.hstack([self.matrix(), np.zeros((3, 1))])


@dataclass(frozen=True)
class PointCloud:
    """LiDAR points (N, 3) in metres with reflectance in [0, 1]."""

    points: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        i = np.array(self.intensities, dtype=np.float64).reshape(-1)
        if p.shape[0] != i.shape[0]:
            raise ValueError(f"{p.shape[0]} points but {i.shape[0]} intensities")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        if np.any(~np.isfinite(i)) or np.any(i < 0) or np.any(i > 1):
            raise ValueError("intensities must lie in [0, 1]")
        p.flags.writeable = False
        i.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "intensities", i)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, index) -> "PointCloud":
        return PointCloud(self.points[index], self.intensities[index])

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0))


@dataclass(frozen=True)
class ProjectedPoints:
    """Cloud points surviving projection, in input order.

    ``index`` refers back into the source cloud.
    """

    uv: np.ndarray
    depth: np.ndarray
    intensity: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return self.uv.shape[0]


def nearest_rotation(m) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)`` as a plain array."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def rotation_from_euler(angles: EulerAngles) -> RigidTransform:
    roll, pitch, yaw = (float(a) for a in angles)
    if not all(math.isfinite(a) for a in (roll, pitch, yaw)):
        raise ValueError(f"Euler angles must be finite, got {tuple(angles)}")
    return RigidTransform(rotation_matrix(roll, pitch, yaw), np.zeros(3))


def euler_from_rotation(rotation) -> EulerAngles:
    """Inverse of :func:`rotation_matrix` for pitch away from ±90°."""
    r = np.asarray(rotation, dtype=np.float64)
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    roll = math.atan2(r[2, 1], r[2, 2])
    yaw = math.atan2(r[1, 0], r[0, 0])
    return EulerAngles(roll, pitch, yaw)


def transform_point(t: RigidTransform, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return t.rotation @ p + t.translation


def project_to_pixel(k: CameraIntrinsics, p_cam) -> PixelPoint:
    x, y, z = (float(c) for c in np.asarray(p_cam, dtype=np.float64).reshape(3))
    if not z > 0:
        raise BehindCameraError(f"point has camera depth {z} <= 0")
    return PixelPoint(k.fx * (x / z) + k.u0, k.fy * (y / z) + k.v0, z)


def project_cloud(
    cloud: PointCloud,
    t: RigidTransform,
    k: CameraIntrinsics,
    image_size: tuple[int, int],
) -> ProjectedPoints:
    """Project every cloud point, dropping those behind the camera or off-image."""
    width, height = image_size
    uv, depth, index = kernels.project_points(
        cloud.points, t.rotation, t.translation,
        k.fx, k.fy, k.u0, k.v0, float(width), float(height), MIN_DEPTH,
    )
    return ProjectedPoints(uv, depth, cloud.intensities[index], index)


def generate_depth_map(
    cloud: PointCloud,
    t: RigidTransform,
    k: CameraIntrinsics,
    image_size: tuple[int, int],
) -> np.ndarray:
    """(height, width) depth image; nearest point wins, empty pixels hold ``NO_DATA``."""
    width, height = image_size
    proj = project_cloud(cloud, t, k, image_size)
    cols = np.rint(proj.uv[:, 0]).astype(np.intp)
    rows = np.rint(proj.uv[:, 1]).astype(np.intp)
    ok = (cols < width) & (rows < height)
    depth = np.full((height, width), np.inf)
    np.minimum.at(depth, (rows[ok], cols[ok]), proj.depth[ok])
    depth[np.isinf(depth)] = NO_DATA
    return depth

"""The calibration search problem: genome layout, bounds, scene and evaluator.

A genome is a length-7 float array ``[x, y, z, yaw, pitch, roll, n]``. The
first six entries describe a *correction* transform applied on top of the
scene's nominal extrinsics (``extrinsic = correction ∘ nominal``), so the
bounded search box is centred on whatever initial calibration the scene
carries. ``n`` is the number of LiDAR points evaluated; it stays real-valued
during the search and is rounded when decoded.
"""

from __future__ import annotations

import math
import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .features import EDGE_SIDES, EdgePointSet, GrayImage
from .geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    PointCloud,
    RigidTransform,
    euler_from_rotation,
    rotation_matrix,
)
from .objectives import (
    COST_MODES,
    NORMALIZATIONS,
    ObjectiveVector,
    WeightPair,
    chamfer_distance,
    computational_cost,
)

VARIABLES = ("x", "y", "z", "yaw", "pitch", "roll", "n")
N_VAR = len(VARIABLES)

TRANSLATION_BOUND = 1.5
ROTATION_BOUND = math.radians(25.0)
NARROW_ROTATION_BOUND = 0.1
DEFAULT_N_MIN = 100
EDGE_SOURCES = ("scan", "subset")


@dataclass(frozen=True)
class CalibrationBounds:
    """Box bounds: ±translation (m) per axis, ±rotation (rad) per angle, [n_min, n_max]."""

    n_max: int
    n_min: int = DEFAULT_N_MIN
    translation: float = TRANSLATION_BOUND
    rotation: float = ROTATION_BOUND

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        if self.n_max < self.n_min:
            raise ValueError(f"n_max={self.n_max} below n_min={self.n_min}")
        if not (self.translation > 0 and self.rotation > 0):
            raise ValueError("translation and rotation bounds must be positive")

    @classmethod
    def for_cloud(cls, n_points: int, preset: str = "wide", n_min: int = DEFAULT_N_MIN) -> "CalibrationBounds":
        """Default bounds for a cloud; ``preset="narrow"`` uses ±0.1 rad rotations."""
        rot = {"wide": ROTATION_BOUND, "narrow": NARROW_ROTATION_BOUND}[preset]
        return cls(n_max=n_points, n_min=min(n_min, n_points), rotation=rot)

    @property
    def lower(self) -> np.ndarray:
        t, r = self.translation, self.rotation
        return np.array([-t, -t, -t, -r, -r, -r, float(self.n_min)])

    @property
    def upper(self) -> np.ndarray:
        t, r = self.translation, self.rotation
        return np.array([t, t, t, r, r, r, float(self.n_max)])

    def with_fixed_n(self, n: int | None = None) -> "CalibrationBounds":
        n = self.n_max if n is None else n
        return CalibrationBounds(n_max=n, n_min=n, translation=self.translation, rotation=self.rotation)


def repair(x, bounds: CalibrationBounds) -> np.ndarray:
    """Clamp every genome component into its bound interval."""
    return np.clip(np.asarray(x, dtype=np.float64), bounds.lower, bounds.upper)


def correction_transform(x) -> RigidTransform:
    x = np.asarray(x, dtype=np.float64)
    return RigidTransform(rotation_matrix(x[5], x[4], x[3]), x[:3])


def decode(x, bounds: CalibrationBounds) -> tuple[RigidTransform, int]:
    """Genome -> (correction transform, integer point count)."""
    x = np.asarray(x, dtype=np.float64)
    n = int(np.clip(np.rint(x[6]), bounds.n_min, bounds.n_max))
    return correction_transform(x), n


def genome_from_transform(correction: RigidTransform, n: float) -> np.ndarray:
    roll, pitch, yaw = euler_from_rotation(correction.rotation)
    return np.array([*correction.translation, yaw, pitch, roll, float(n)])


@dataclass(frozen=True)
class CalibrationScene:
    """Fixed data of one calibration instance.

    ``ground_truth`` is carried for validation only; the evaluator never reads it.
    """

    cloud: PointCloud
    image: GrayImage
    intrinsics: CameraIntrinsics
    gt_edges: EdgePointSet
    gt_intensity: EdgePointSet
    nominal: RigidTransform = field(default_factory=RigidTransform.identity)
    ground_truth: RigidTransform | None = None

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.image.width, self.image.height)


def true_genome(scene: CalibrationScene, n: float | None = None) -> np.ndarray:
    """Genome whose correction maps the nominal extrinsics onto the ground truth."""
    if scene.ground_truth is None:
        raise ValueError("scene has no ground-truth transform")
    corr = scene.ground_truth.compose(scene.nominal.inverse())
    return genome_from_transform(corr, len(scene.cloud) if n is None else n)


@dataclass
class Evaluation:
    """Everything computed for one genome; ``objectives`` is what the optimiser sees."""

    objectives: ObjectiveVector
    n: int
    edge_chamfer: float
    intensity_chamfer: float
    est: np.ndarray
    projected_uv: np.ndarray


class CalibrationProblem:
    """Evaluates genomes against a scene.

    The cloud is subsampled by one seeded shuffle fixed at construction: a
    genome with point count ``n`` uses the first ``n`` points of that shuffle,
    kept in scan order. Within a run the objectives are therefore a
    deterministic function of the genome.

    LiDAR edge points come from depth jumps in scan order. With
    ``edge_source="scan"`` the jumps are found once, on the full scan's
    ranges, and each evaluation keeps the flagged points of its subset; a
    larger ``n`` then always sees a superset of the edge points. With
    ``"subset"`` they are recomputed on the projected subset's camera depths,
    where sparse subsets flag spurious jumps between far-apart neighbours.
    """

    def __init__(
        self,
        scene: CalibrationScene,
        bounds: CalibrationBounds | None = None,
        weights: WeightPair | None = None,
        cost_mode: str = "proxy",
        seed: int = 0,
        depth_gap: float = 0.5,
        normalization: str = "mean",
        intensity_source: str = "image",
        lidar_intensity_threshold: float = 0.5,
        inner_iterations: int = 1,
        edge_side: str = "foreground",
        edge_source: str = "scan",
    ):
        if cost_mode not in COST_MODES:
            raise ValueError(f"unknown cost mode {cost_mode!r}")
        if normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {normalization!r}")
        if intensity_source not in ("image", "lidar"):
            raise ValueError(f"unknown intensity source {intensity_source!r}")
        if not depth_gap > 0:
            raise ValueError("depth_gap must be positive")
        if edge_side not in EDGE_SIDES:
            raise ValueError(f"unknown edge side {edge_side!r}")
        if edge_source not in EDGE_SOURCES:
            raise ValueError(f"unknown edge source {edge_source!r}; expected one of {EDGE_SOURCES}")
        if len(scene.gt_edges) == 0:
            raise ValueError("scene has no ground-truth edge points")
        self.scene = scene
        self.bounds = bounds or CalibrationBounds.for_cloud(len(scene.cloud))
        if self.bounds.n_max > len(scene.cloud):
            raise ValueError(f"n_max={self.bounds.n_max} exceeds cloud size {len(scene.cloud)}")
        self.weights = weights or WeightPair(0.8, 0.2)
        if self.weights.w2 > 0 and len(scene.gt_intensity) == 0:
            raise ValueError("intensity weight is positive but the scene has no intensity points")
        self.cost_mode = cost_mode
        self.seed = seed
        self.depth_gap = depth_gap
        self.normalization = normalization
        self.intensity_source = intensity_source
        self.lidar_intensity_threshold = lidar_intensity_threshold
        self.inner_iterations = max(1, int(inner_iterations))
        self.edge_side = edge_side
        self.edge_source = edge_source
        self._scan_edges = None
        if edge_source == "scan":
            ranges = np.sqrt(np.einsum("ij,ij->i", scene.cloud.points, scene.cloud.points))
            self._scan_edges = kernels.depth_gap_mask(ranges, depth_gap, edge_side == "foreground")
        order = np.random.default_rng(seed).permutation(len(scene.cloud))
        self._rank = np.empty_like(order)
        self._rank[order] = np.arange(order.size)
        self._reference: tuple[float, float] | None = None
        self.n_evaluations = 0

    @property
    def parallel_safe(self) -> bool:
        return self.cost_mode == "proxy"

    def with_bounds(self, bounds: CalibrationBounds) -> "CalibrationProblem":
        return self._clone(bounds=bounds)

    def with_weights(self, weights: WeightPair) -> "CalibrationProblem":
        return self._clone(weights=weights)

    def _clone(self, **changes) -> "CalibrationProblem":
        kw = dict(
            scene=self.scene, bounds=self.bounds, weights=self.weights,
            cost_mode=self.cost_mode, seed=self.seed, depth_gap=self.depth_gap,
            normalization=self.normalization, intensity_source=self.intensity_source,
            lidar_intensity_threshold=self.lidar_intensity_threshold,
            inner_iterations=self.inner_iterations, edge_side=self.edge_side,
            edge_source=self.edge_source,
        )
        kw.update(changes)
        return CalibrationProblem(**kw)

    def subsample_index(self, n: int) -> np.ndarray:
        """Cloud indices of the first ``n`` shuffled points, ascending."""
        return np.flatnonzero(self._rank < n)

    def extrinsic(self, x) -> RigidTransform:
        return correction_transform(x).compose(self.scene.nominal)

    def _pipeline(self, t: RigidTransform, n: int) -> Evaluation:
        scene = self.scene
        k = scene.intrinsics
        width, height = scene.image_size
        idx = self.subsample_index(n)
        uv, depth, keep = kernels.project_points(
            scene.cloud.points[idx], t.rotation, t.translation,
            k.fx, k.fy, k.u0, k.v0, float(width), float(height), MIN_DEPTH,
        )
        if self._scan_edges is not None:
            est = uv[self._scan_edges[idx[keep]]]
        else:
            est = uv[kernels.depth_gap_mask(depth, self.depth_gap, self.edge_side == "foreground")]
        w = self.weights
        edge = inten = 0.0
        if w.w1 > 0:
            edge = chamfer_distance(scene.gt_edges, est, self.normalization, n)
        if w.w2 > 0:
            if self.intensity_source == "lidar":
                refl = scene.cloud.intensities[idx[keep]]
                est_i = uv[refl >= self.lidar_intensity_threshold]
            else:
                est_i = est
            inten = chamfer_distance(scene.gt_intensity, est_i, self.normalization, n)
        total = 0.0
        if w.w1 > 0:
            total += w.w1 * edge
        if w.w2 > 0:
            total += w.w2 * inten
        return Evaluation(ObjectiveVector(total, math.nan), n, edge, inten, est, uv)

    def _measure(self, t: RigidTransform, n: int) -> tuple[Evaluation, tuple[float, float]]:
        was_tracing = tracemalloc.is_tracing()
        if not was_tracing:
            tracemalloc.start()
        try:
            elapsed = 0.0
            peak = 0
            for _ in range(self.inner_iterations):
                tracemalloc.reset_peak()
                base = tracemalloc.get_traced_memory()[0]
                t0 = time.perf_counter()
                ev = self._pipeline(t, n)
                elapsed += time.perf_counter() - t0
                peak = max(peak, tracemalloc.get_traced_memory()[1] - base)
        finally:
            if not was_tracing:
                tracemalloc.stop()
        return ev, (elapsed / self.inner_iterations, float(max(peak, 1)))

    def reference_cost(self) -> tuple[float, float]:
        """(seconds, bytes) of one evaluation at ``n_max`` with the nominal transform."""
        if self._reference is None:
            _, self._reference = self._measure(RigidTransform.identity().compose(self.scene.nominal), self.bounds.n_max)
        return self._reference

    def details(self, x) -> Evaluation:
        x = repair(x, self.bounds)
        corr, n = decode(x, self.bounds)
        t = corr.compose(self.scene.nominal)
        nb = (self.bounds.n_min, self.bounds.n_max)
        if self.cost_mode == "proxy":
            ev = self._pipeline(t, n)
            _, comp = computational_cost(n, nb, "proxy")
        else:
            ref = self.reference_cost()
            ev, meas = self._measure(t, n)
            _, comp = computational_cost(n, nb, "measured", meas, ref)
        ev.objectives = ObjectiveVector(ev.objectives.chamfer, comp)
        return ev

    def evaluate(self, x) -> ObjectiveVector:
        """Objective pair ``(chamfer, comp_cost)`` of a genome."""
        self.n_evaluations += 1
        return self.details(x).objectives

"""Alignment error and computational-cost objectives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .features import EdgePointSet

EMPTY_PENALTY = 1e6

NORMALIZATIONS = ("mean", "per_lidar", "sum")
COST_MODES = ("proxy", "measured")


class ObjectiveVector(NamedTuple):
    chamfer: float
    comp_cost: float


class CostBreakdown(NamedTuple):
    t_norm: float
    m_norm: float

    @property
    def total(self) -> float:
        return self.t_norm + self.m_norm


@dataclass(frozen=True)
class WeightPair:
    """Edge weight ``w1`` and intensity weight ``w2`` with ``w1 + w2 == 1``."""

    w1: float
    w2: float

    def __post_init__(self):
        if not (0.0 <= self.w1 <= 1.0 and 0.0 <= self.w2 <= 1.0):
            raise ValueError(f"weights must lie in [0, 1], got ({self.w1}, {self.w2})")
        if abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.w1} + {self.w2}")

    @classmethod
    def from_w1(cls, w1: float) -> "WeightPair":
        w1 = float(w1)
        return cls(w1, 1.0 - w1)


def _points(s) -> np.ndarray:
    if isinstance(s, EdgePointSet):
        return s.points
    return np.asarray(s, dtype=np.float64).reshape(-1, 2)


def nearest_sq(gt, est) -> np.ndarray:
    """Squared distance from every ground-truth point to its nearest estimate."""
    return kernels.nearest_sq_dists(_points(est), _points(gt))


def chamfer_distance(gt, est, normalization: str = "mean", n_lidar: int | None = None) -> float:
    """One-sided squared Chamfer distance from ``gt`` to ``est``.

    ``normalization`` selects the divisor of the summed squared distances:
    ``"mean"`` uses ``|gt|``, ``"per_lidar"`` uses ``n_lidar`` (the number of
    LiDAR points evaluated) and ``"sum"`` leaves the sum unnormalized.
    An empty ``est`` returns :data:`EMPTY_PENALTY`.
    """
    g = _points(gt)
    if g.shape[0] == 0:
        raise ValueError("ground-truth point set is empty")
    e = _points(est)
    if e.shape[0] == 0:
        return EMPTY_PENALTY
    d2 = kernels.nearest_sq_dists(e, g)
    if normalization == "mean":
        return float(d2.mean())
    if normalization == "sum":
        return float(d2.sum())
    if normalization == "per_lidar":
        if not n_lidar or n_lidar < 1:
            raise ValueError("per_lidar normalization needs n_lidar >= 1")
        return float(d2.sum() / n_lidar)
    raise ValueError(f"unknown normalization {normalization!r}; expected one of {NORMALIZATIONS}")


def weighted_chamfer(
    gt_edge,
    gt_intensity,
    est,
    w: WeightPair,
    est_intensity=None,
    normalization: str = "mean",
    n_lidar: int | None = None,
) -> float:
    """``w1 * chamfer(gt_edge, est) + w2 * chamfer(gt_intensity, est_intensity)``.

    ``est_intensity`` defaults to ``est``. A term with zero weight is skipped,
    so its ground-truth set may then be empty.
    """
    total = 0.0
    if w.w1 > 0:
        total += w.w1 * chamfer_distance(gt_edge, est, normalization, n_lidar)
    if w.w2 > 0:
        other = est if est_intensity is None else est_intensity
        total += w.w2 * chamfer_distance(gt_intensity, other, normalization, n_lidar)
    return total


def computational_cost(
    n: int,
    bounds: tuple[int, int],
    mode: str = "proxy",
    measurement: tuple[float, float] | None = None,
    reference: tuple[float, float] | None = None,
) -> tuple[CostBreakdown, float]:
    """Normalised time + memory cost of evaluating ``n`` LiDAR points.

    In ``"proxy"`` mode both terms are ``n / n_max``. In ``"measured"`` mode
    ``measurement`` is ``(elapsed_seconds, bytes)`` and ``reference`` the same
    pair recorded at ``n = n_max``.
    """
    n_min, n_max = bounds
    if not n_min <= n <= n_max:
        raise ValueError(f"n={n} outside [{n_min}, {n_max}]")
    if mode == "proxy":
        frac = n / n_max
        cost = CostBreakdown(frac, frac)
    elif mode == "measured":
        if measurement is None or reference is None:
            raise ValueError("measured cost needs both measurement and reference")
        (elapsed, nbytes), (t_ref, m_ref) = measurement, reference
        if t_ref <= 0 or m_ref <= 0:
            raise ValueError("reference time and memory must be positive")
        cost = CostBreakdown(elapsed / t_ref, nbytes / m_ref)
    else:
        raise ValueError(f"unknown cost mode {mode!r}; expected one of {COST_MODES}")
    return cost, cost.total

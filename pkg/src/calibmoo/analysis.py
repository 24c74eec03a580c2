"""Post-hoc studies over a Pareto archive: knee choice, variable correlations, weight sweep."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .baselines import single_objective_minimize
from .evolution import EvolutionConfig, ParetoArchive, hypervolume_2d
from .objectives import WeightPair
from .problem import VARIABLES, CalibrationProblem

__all__ = [
    "FLAG_THRESHOLD",
    "KneeResult",
    "InnovizationReport",
    "RobustnessPoint",
    "select_knee",
    "innovization_report",
    "robustness_sweep",
    "hypervolume_2d",
    "parse_range",
]

FLAG_THRESHOLD = 0.8
REPORT_COLUMNS = (*VARIABLES, "chamfer", "comp_cost")
MIN_INNOVIZATION_ROWS = 10


class KneeResult(NamedTuple):
    index: int
    genome: np.ndarray
    objectives: tuple[float, float]
    score: float


def _archive_arrays(archive) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(archive, ParetoArchive):
        return archive.genomes, archive.objectives
    genomes, objs = archive
    return np.asarray(genomes, dtype=np.float64), np.asarray(objs, dtype=np.float64).reshape(-1, 2)


def select_knee(archive, max_chamfer: float | None = None, max_cost: float | None = None) -> KneeResult:
    """Entry farthest from the chord between the two extreme entries.

    Objectives are min-max normalised to the unit square first. Only interior
    entries (not the min-chamfer or min-cost extreme) are candidates; ties go
    to the lower chamfer. The optional caps drop entries above them before
    anything else. ``index`` refers to the (possibly ``ParetoArchive``)
    input order.
    """
    genomes, objs = _archive_arrays(archive)
    keep = np.ones(len(objs), dtype=bool)
    if max_chamfer is not None:
        keep &= objs[:, 0] <= max_chamfer
    if max_cost is not None:
        keep &= objs[:, 1] <= max_cost
    idx = np.flatnonzero(keep)
    if idx.size < 3:
        raise ValueError(f"knee selection: need ≥ 3 entries, got {idx.size}")
    f = objs[idx]
    lo, hi = f.min(axis=0), f.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    z = (f - lo) / span
    a = int(np.lexsort((z[:, 1], z[:, 0]))[0])
    b = int(np.lexsort((z[:, 0], z[:, 1]))[0])
    d = z[b] - z[a]
    length = math.hypot(d[0], d[1])
    rel = z - z[a]
    if length > 0:
        dist = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0]) / length
    else:
        dist = np.hypot(rel[:, 0], rel[:, 1])
    interior = np.ones(len(f), dtype=bool)
    interior[[a, b]] = False
    cand = np.flatnonzero(interior)
    best = cand[np.lexsort((f[cand, 0], -dist[cand]))[0]]
    i = int(idx[best])
    return KneeResult(i, genomes[i].copy(), (float(objs[i, 0]), float(objs[i, 1])), float(dist[best]))


@dataclass
class InnovizationReport:
    names: tuple[str, ...]
    matrix: np.ndarray
    flagged: list[tuple[str, str, float]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("a", "b", "r", "flagged"))
        k = len(self.names)
        for i in range(k):
            for j in range(i + 1, k):
                r = float(self.matrix[i, j])
                w.writerow((self.names[i], self.names[j], repr(r), int(abs(r) > FLAG_THRESHOLD)))
        return buf.getvalue()


def correlation_matrix(data) -> np.ndarray:
    """Pearson correlations between columns; a constant column correlates 0 with everything."""
    x = np.asarray(data, dtype=np.float64)
    c = x - x.mean(axis=0)
    norm = np.sqrt(np.einsum("ij,ij->j", c, c))
    ok = norm > 0
    z = np.zeros_like(c)
    z[:, ok] = c[:, ok] / norm[ok]
    r = z.T @ z
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, ok.astype(np.float64))
    return np.clip(r, -1.0, 1.0)


def innovization_report(archive, threshold: float = FLAG_THRESHOLD) -> InnovizationReport:
    """Correlations among the seven variables and two objectives over the archive."""
    genomes, objs = _archive_arrays(archive)
    if len(objs) < MIN_INNOVIZATION_ROWS:
        raise ValueError(f"innovization needs >= {MIN_INNOVIZATION_ROWS} archive entries, got {len(objs)}")
    r = correlation_matrix(np.hstack([genomes, objs]))
    names = REPORT_COLUMNS
    flagged = [
        (names[i], names[j], float(r[i, j]))
        for i in range(len(names))
        for j in range(i + 1, len(names))
        if abs(r[i, j]) > threshold
    ]
    return InnovizationReport(names, r, flagged)


class RobustnessPoint(NamedTuple):
    w1: float
    error: float
    edge_chamfer: float
    intensity_chamfer: float
    genome: np.ndarray


ROBUSTNESS_COLUMNS = ("w1", "w2", "error", "edge_chamfer", "intensity_chamfer", *VARIABLES)


def robustness_sweep(
    problem: CalibrationProblem,
    w1_values,
    cfg: EvolutionConfig | None = None,
    fix_n: bool = True,
) -> list[RobustnessPoint]:
    """Best weighted error per edge weight, each from one single-objective run.

    Every run uses the same config (seed and budget), so the only thing that
    changes between rows is the weight.
    """
    cfg = cfg or EvolutionConfig()
    out = []
    for w1 in w1_values:
        w1 = float(w1)
        if not 0.0 < w1 < 1.0:
            raise ValueError(f"w1 must lie in (0, 1), got {w1}")
        p = problem.with_weights(WeightPair.from_w1(w1))
        res = single_objective_minimize(p, cfg, fix_n=fix_n)
        ev = p.details(res.best)
        out.append(RobustnessPoint(w1, res.objectives.chamfer, ev.edge_chamfer, ev.intensity_chamfer, res.best))
    return out


def robustness_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROBUSTNESS_COLUMNS)
    for p in points:
        w.writerow([repr(p.w1), repr(1.0 - p.w1), repr(p.error), repr(p.edge_chamfer),
                    repr(p.intensity_chamfer), *(repr(float(v)) for v in p.genome)])
    return buf.getvalue()


def parse_range(text: str) -> list[float]:
    """``"start:stop:step"`` (stop inclusive) or a comma list into floats.

    Values are rounded to 12 decimals so ``0.1:0.9:0.1`` yields exactly nine
    clean weights.
    """
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"step must be positive, got {step}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ValueError(f"empty range {text!r}")
        return [round(start + i * step, 12) for i in range(count)]
    vals = [float(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise ValueError("empty value list")
    return vals

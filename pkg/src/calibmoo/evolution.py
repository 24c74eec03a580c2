"""NSGA-II: non-dominated sorting, crowding, SBX, polynomial mutation and an external archive.

All randomness comes from one ``numpy.random.Generator`` (PCG64) seeded from
the config and consumed in a fixed order per mating: tournament draws, then
crossover draws, then mutation draws. Objective evaluation may be fanned out
to threads; results are gathered in submission order and workers never touch
the generator, so a run is reproducible regardless of ``threads``.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .objectives import ObjectiveVector
from .problem import N_VAR, VARIABLES, CalibrationBounds, repair

THREADS_ENV = "CALIBMOO_THREADS"


class EvaluationError(RuntimeError):
    """An objective evaluation raised; ``genome`` is the offending vector."""

    def __init__(self, genome, cause: BaseException):
        self.genome = np.array(genome, dtype=np.float64)
        super().__init__(f"evaluation failed for genome {self.genome.tolist()}: {cause!r}")


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 100
    generations: int = 100
    sbx_probability: float = 0.9
    sbx_eta: float = 15.0
    sbx_variable_probability: float = 0.5
    pm_eta: float = 20.0
    pm_probability: float = 1.0 / N_VAR
    seed: int = 0
    eliminate_duplicates: bool = True
    parallel_evaluation: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError(f"population_size must be even and >= 4, got {self.population_size}")
        if self.generations < 0:
            raise ValueError(f"generations must be >= 0, got {self.generations}")
        for name in ("sbx_probability", "sbx_variable_probability", "pm_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not (self.sbx_eta > 0 and self.pm_eta > 0):
            raise ValueError("distribution indices must be positive")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def paper_scale(cls, **overrides) -> "EvolutionConfig":
        """Population 1000 for 200 generations (200k evaluations)."""
        base = dict(population_size=1000, generations=200, sbx_probability=0.9, sbx_eta=15.0, pm_eta=20.0)
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes) -> "EvolutionConfig":
        return replace(self, **changes)

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return self.threads
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n

    @property
    def evaluations(self) -> int:
        return self.population_size * (self.generations + 1)


@dataclass
class Individual:
    genome: np.ndarray
    objectives: ObjectiveVector | None = None
    rank: int = -1
    crowding: float = 0.0


def dominates(a, b) -> bool:
    """Pareto dominance for minimisation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return bool(np.all(a <= b) and np.any(a < b))


def non_dominated_sort(objectives) -> list[list[int]]:
    """Fronts as ascending index lists, best front first."""
    obj = np.asarray(objectives, dtype=np.float64)
    if obj.size == 0:
        return []
    obj = obj.reshape(len(obj), -1)
    ranks = kernels.pareto_ranks(np.ascontiguousarray(obj))
    return [np.flatnonzero(ranks == r).tolist() for r in range(int(ranks.max()) + 1)]


def crowding_distance(front) -> np.ndarray:
    """Crowding distance of each member of one front."""
    obj = np.asarray(front, dtype=np.float64)
    if obj.ndim != 2 or obj.shape[0] == 0:
        raise ValueError("crowding distance needs a non-empty (k, m) front")
    k, m = obj.shape
    dist = np.zeros(k)
    if k <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(obj[:, j], kind="stable")
        col = obj[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def sbx_children(p1, p2, u, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic SBX children of two parents for given uniform draws ``u``."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    expo = 1.0 / (eta + 1.0)
    with np.errstate(divide="ignore"):
        beta = np.where(u <= 0.5, (2.0 * u) ** expo, (1.0 / (2.0 * (1.0 - u))) ** expo)
    # displacement form: beta == 1 or equal parents reproduce the parents exactly
    step = 0.5 * (1.0 - beta) * (p2 - p1)
    return p1 + step, p2 - step


def sbx_crossover(p1, p2, cfg: EvolutionConfig, rng: np.random.Generator, bounds: CalibrationBounds):
    """SBX on a pair.

    With probability ``sbx_probability`` the pair recombines; each variable
    then takes part with probability ``sbx_variable_probability`` (others are
    copied) and its two child values are swapped with probability 1/2.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    cross = rng.random() < cfg.sbx_probability
    take = rng.random(p1.size) < cfg.sbx_variable_probability
    u = rng.random(p1.size)
    swap = rng.random(p1.size) < 0.5
    if not cross:
        return p1.copy(), p2.copy()
    # u == 1 would give an infinite spread
    u = np.where(take, np.minimum(u, 1.0 - 1e-12), 0.5)
    c1, c2 = sbx_children(p1, p2, u, cfg.sbx_eta)
    c1[swap], c2[swap] = c2[swap], c1[swap].copy()
    return repair(c1, bounds), repair(c2, bounds)


def pm_perturb(x, lower, upper, u, eta: float) -> np.ndarray:
    """Bounded polynomial perturbation of every variable for given draws ``u``."""
    x = np.asarray(x, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    span = upper - lower
    ok = span > 0
    d1 = np.where(ok, (x - lower) / np.where(ok, span, 1.0), 0.0)
    d2 = np.where(ok, (upper - x) / np.where(ok, span, 1.0), 0.0)
    power = 1.0 / (eta + 1.0)
    low = u < 0.5
    val_lo = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
    delta = np.where(low, val_lo ** power - 1.0, 1.0 - val_hi ** power)
    return np.clip(np.where(ok, x + delta * span, x), lower, upper)


def polynomial_mutation(x, cfg: EvolutionConfig, rng: np.random.Generator, bounds: CalibrationBounds) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mask = rng.random(x.size) < cfg.pm_probability
    u = rng.random(x.size)
    if not mask.any():
        return repair(x, bounds)
    y = pm_perturb(x, bounds.lower, bounds.upper, u, cfg.pm_eta)
    return repair(np.where(mask, y, x), bounds)


def hypervolume_2d(front, reference) -> float:
    """Exact area dominated by ``front`` and bounded by ``reference``."""
    pts = np.asarray(front, dtype=np.float64).reshape(-1, 2)
    ref = np.asarray(reference, dtype=np.float64).reshape(2)
    if pts.shape[0] == 0:
        return 0.0
    bad = np.any(pts > ref, axis=1)
    if bad.any():
        raise ValueError(f"point {pts[np.argmax(bad)].tolist()} does not dominate reference {ref.tolist()}")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    ceiling = ref[1]
    for f1, f2 in pts:
        if f2 < ceiling:
            area += (ref[0] - f1) * (ceiling - f2)
            ceiling = f2
    return float(area)


class ParetoArchive:
    """Mutually non-dominated (genome, objectives) pairs, sorted by chamfer.

    An incoming point that is weakly dominated by (or equal to) a stored one
    is rejected, so entries have distinct objective vectors.
    """

    def __init__(self):
        self._genomes: list[np.ndarray] = []
        self._objs = np.zeros((0, 2))

    def __len__(self) -> int:
        return len(self._genomes)

    @property
    def entries(self) -> list[tuple[np.ndarray, ObjectiveVector]]:
        return [(g.copy(), ObjectiveVector(*map(float, o))) for g, o in zip(self._genomes, self._objs)]

    @property
    def genomes(self) -> np.ndarray:
        return np.array(self._genomes).reshape(-1, N_VAR) if self._genomes else np.zeros((0, N_VAR))

    @property
    def objectives(self) -> np.ndarray:
        return self._objs.copy()

    def add(self, genome, objectives) -> bool:
        o = np.asarray(objectives, dtype=np.float64).reshape(2)
        if len(self._genomes):
            if np.any(np.all(self._objs <= o, axis=1)):
                return False
            keep = ~np.all(o <= self._objs, axis=1)
            self._genomes = [g for g, k in zip(self._genomes, keep) if k]
            self._objs = self._objs[keep]
        pos = int(np.searchsorted(self._objs[:, 0], o[0]))
        self._genomes.insert(pos, np.array(genome, dtype=np.float64))
        self._objs = np.insert(self._objs, pos, o, axis=0)
        return True

    def update(self, genomes, objectives) -> int:
        return sum(self.add(g, o) for g, o in zip(genomes, objectives))

    def hypervolume(self, reference) -> float:
        return hypervolume_2d(self._objs, reference)

    def min_chamfer(self) -> tuple[np.ndarray, ObjectiveVector]:
        if not self._genomes:
            raise ValueError("archive is empty")
        return self._genomes[0].copy(), ObjectiveVector(*map(float, self._objs[0]))

    @classmethod
    def from_arrays(cls, genomes, objectives) -> "ParetoArchive":
        a = cls()
        a.update(np.asarray(genomes, dtype=np.float64).reshape(-1, N_VAR), np.asarray(objectives, dtype=np.float64))
        return a


ARCHIVE_COLUMNS = (*VARIABLES, "chamfer", "comp_cost")


def archive_csv(archive: ParetoArchive) -> str:
    """Archive as CSV, one row per entry in chamfer order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ARCHIVE_COLUMNS)
    for g, o in zip(archive.genomes, archive.objectives):
        w.writerow([repr(float(v)) for v in (*g, *o)])
    return buf.getvalue()


def read_archive_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(genomes, objectives) from a file written by :func:`archive_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != ARCHIVE_COLUMNS:
        raise ValueError(f"{path}: line 1: expected header {','.join(ARCHIVE_COLUMNS)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(ARCHIVE_COLUMNS):
            raise ValueError(f"{path}: line {lineno}: expected {len(ARCHIVE_COLUMNS)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
    arr = np.array(data, dtype=np.float64).reshape(-1, len(ARCHIVE_COLUMNS))
    return arr[:, :N_VAR], arr[:, N_VAR:]


LOG_COLUMNS = (
    "generation", "evaluations", "best_chamfer", "mean_chamfer",
    "best_comp", "archive_size", "archive_hypervolume",
)


@dataclass
class GenerationLog:
    rows: list[tuple] = field(default_factory=list)

    def append(self, *row) -> None:
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = LOG_COLUMNS.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Evaluator:
    """Evaluates genome batches in order, optionally on a thread pool."""

    def __init__(self, fn: Callable[[np.ndarray], ObjectiveVector], threads: int = 1):
        self.fn = fn
        self.threads = threads
        self.count = 0

    def _one(self, g):
        try:
            return tuple(self.fn(g))
        except Exception as exc:
            raise EvaluationError(g, exc) from exc

    def __call__(self, genomes: np.ndarray) -> np.ndarray:
        self.count += len(genomes)
        if self.threads > 1 and len(genomes) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                out = list(pool.map(self._one, genomes))
        else:
            out = [self._one(g) for g in genomes]
        return np.array(out, dtype=np.float64).reshape(len(genomes), -1)


def make_evaluator(problem, cfg: EvolutionConfig) -> Evaluator:
    threads = 1
    if cfg.parallel_evaluation and getattr(problem, "parallel_safe", True):
        threads = cfg.resolved_threads()
    return Evaluator(problem.evaluate, threads)


def random_population(size: int, bounds: CalibrationBounds, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(bounds.lower, bounds.upper, size=(size, N_VAR))


def tournament(better: Callable[[int, int], bool], size: int, rng: np.random.Generator) -> int:
    a, b = (int(i) for i in rng.integers(0, size, 2))
    if better(b, a) or (not better(a, b) and b < a):
        return b
    return a


def make_offspring(
    genomes: np.ndarray,
    better: Callable[[int, int], bool],
    cfg: EvolutionConfig,
    bounds: CalibrationBounds,
    rng: np.random.Generator,
) -> np.ndarray:
    """``population_size`` children by tournament, SBX and mutation.

    With duplicate elimination a child equal to any parent or earlier child
    is discarded; after a bounded number of attempts the batch may be short.
    """
    size = len(genomes)
    want = cfg.population_size
    seen = {g.tobytes() for g in genomes} if cfg.eliminate_duplicates else set()
    out: list[np.ndarray] = []
    attempts = 0
    while len(out) < want and attempts < 50 * want:
        attempts += 1
        i = tournament(better, size, rng)
        j = tournament(better, size, rng)
        c1, c2 = sbx_crossover(genomes[i], genomes[j], cfg, rng, bounds)
        for c in (c1, c2):
            c = polynomial_mutation(c, cfg, rng, bounds)
            if cfg.eliminate_duplicates:
                key = c.tobytes()
                if key in seen:
                    continue
                seen.add(key)
            if len(out) < want:
                out.append(c)
    return np.array(out).reshape(-1, N_VAR)


def _rank_and_crowd(objs: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[list[int]]]:
    fronts = non_dominated_sort(objs)
    rank = np.empty(len(objs), dtype=np.intp)
    crowd = np.empty(len(objs))
    for r, f in enumerate(fronts):
        rank[f] = r
        crowd[f] = crowding_distance(objs[f])
    return rank, crowd, fronts


def _environmental_selection(objs: np.ndarray, keep: int) -> np.ndarray:
    _, crowd, fronts = _rank_and_crowd(objs)
    chosen: list[int] = []
    for f in fronts:
        if len(chosen) + len(f) <= keep:
            chosen.extend(f)
            continue
        f = np.asarray(f)
        # stable: larger crowding first, lower index on ties
        order = np.argsort(-crowd[f], kind="stable")
        chosen.extend(f[order[: keep - len(chosen)]].tolist())
        break
    return np.asarray(chosen, dtype=np.intp)


@dataclass
class EvolutionResult:
    population: list[Individual]
    archive: ParetoArchive
    log: GenerationLog
    evaluations: int

    def __iter__(self):
        return iter((self.population, self.archive, self.log))


class _Reference:
    """Running componentwise maximum of all evaluated objectives, plus 10%."""

    def __init__(self):
        self.worst = np.full(2, -np.inf)

    def update(self, objs: np.ndarray) -> None:
        if len(objs):
            self.worst = np.maximum(self.worst, objs.max(axis=0))

    @property
    def point(self) -> np.ndarray:
        return self.worst + 0.1 * np.abs(self.worst)


def evolve(
    problem,
    cfg: EvolutionConfig | None = None,
    initial: np.ndarray | None = None,
    callback: Callable[[int, ParetoArchive], None] | None = None,
) -> EvolutionResult:
    """Run NSGA-II on ``problem`` (anything with ``bounds`` and ``evaluate``).

    ``initial`` optionally supplies the first population (repaired into the
    bounds); missing rows are drawn uniformly at random.
    """
    cfg = cfg or EvolutionConfig()
    bounds: CalibrationBounds = problem.bounds
    rng = np.random.default_rng(cfg.seed)
    evaluate = make_evaluator(problem, cfg)
    size = cfg.population_size

    genomes = random_population(size, bounds, rng)
    if initial is not None:
        seed_rows = np.asarray(initial, dtype=np.float64).reshape(-1, N_VAR)[:size]
        genomes[: len(seed_rows)] = [repair(g, bounds) for g in seed_rows]
    objs = evaluate(genomes)

    archive = ParetoArchive()
    archive.update(genomes, objs)
    ref = _Reference()
    ref.update(objs)
    log = GenerationLog()

    def record(gen: int) -> None:
        log.append(
            gen, evaluate.count, float(objs[:, 0].min()), float(objs[:, 0].mean()),
            float(objs[:, 1].min()), len(archive), archive.hypervolume(ref.point),
        )
        if callback is not None:
            callback(gen, archive)

    record(0)
    for gen in range(1, cfg.generations + 1):
        rank, crowd, _ = _rank_and_crowd(objs)

        def better(a: int, b: int) -> bool:
            return rank[a] < rank[b] or (rank[a] == rank[b] and crowd[a] > crowd[b])

        children = make_offspring(genomes, better, cfg, bounds, rng)
        if len(children):
            child_objs = evaluate(children)
            archive.update(children, child_objs)
            ref.update(child_objs)
            genomes = np.vstack([genomes, children])
            objs = np.vstack([objs, child_objs])
        sel = _environmental_selection(objs, size)
        genomes, objs = genomes[sel], objs[sel]
        record(gen)

    rank, crowd, _ = _rank_and_crowd(objs)
    population = [
        Individual(g.copy(), ObjectiveVector(*map(float, o)), int(r), float(c))
        for g, o, r, c in zip(genomes, objs, rank, crowd)
    ]
    return EvolutionResult(population, archive, log, evaluate.count)


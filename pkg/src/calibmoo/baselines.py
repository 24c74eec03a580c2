"""Single-objective chamfer minimisation and the epsilon-constraint sweep over cost.

Both share the NSGA-II variation operators but rank by one scalar. Selection
is elitist (parents and children compete), so the per-generation best never
gets worse.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .evolution import EvolutionConfig, make_evaluator, make_offspring, random_population
from .objectives import ObjectiveVector
from .problem import N_VAR, VARIABLES, CalibrationProblem, repair

FEASIBILITY_TOL = 1e-6
EPSILON_BUDGET_FRACTION = 0.25


@dataclass
class SingleObjectiveResult:
    best: np.ndarray
    objectives: ObjectiveVector
    trace: list[float]
    evaluations: int


@dataclass
class EpsilonResult:
    epsilon: float
    feasible: bool
    solution: np.ndarray | None
    achieved: ObjectiveVector | None
    evaluations: int = 0


def _fitness(objs: np.ndarray, max_cost: float | None) -> tuple[np.ndarray, np.ndarray]:
    """(violation, chamfer): lexicographic keys, feasible individuals first."""
    if max_cost is None:
        return np.zeros(len(objs)), objs[:, 0]
    return np.maximum(objs[:, 1] - max_cost - FEASIBILITY_TOL, 0.0), objs[:, 0]


def _ga(problem: CalibrationProblem, cfg: EvolutionConfig, max_cost: float | None, initial) -> SingleObjectiveResult:
    bounds = problem.bounds
    rng = np.random.default_rng(cfg.seed)
    evaluate = make_evaluator(problem, cfg)
    size = cfg.population_size

    genomes = random_population(size, bounds, rng)
    if initial is not None:
        rows = np.asarray(initial, dtype=np.float64).reshape(-1, N_VAR)[:size]
        genomes[: len(rows)] = [repair(g, bounds) for g in rows]
    objs = evaluate(genomes)

    def order(o: np.ndarray) -> np.ndarray:
        viol, cham = _fitness(o, max_cost)
        return np.lexsort((np.arange(len(o)), cham, viol))

    srt = order(objs)
    genomes, objs = genomes[srt], objs[srt]
    trace = [float(objs[0, 0]) if _fitness(objs[:1], max_cost)[0][0] == 0 else math.inf]
    for _ in range(cfg.generations):
        # rows are sorted best-first, so a lower index is a better individual
        children = make_offspring(genomes, lambda a, b: a < b, cfg, bounds, rng)
        if len(children):
            genomes = np.vstack([genomes, children])
            objs = np.vstack([objs, evaluate(children)])
        srt = order(objs)[:size]
        genomes, objs = genomes[srt], objs[srt]
        trace.append(float(objs[0, 0]) if _fitness(objs[:1], max_cost)[0][0] == 0 else math.inf)
    return SingleObjectiveResult(genomes[0].copy(), ObjectiveVector(*map(float, objs[0])), trace, evaluate.count)


def single_objective_minimize(
    problem: CalibrationProblem,
    cfg: EvolutionConfig | None = None,
    fix_n: bool = True,
    initial=None,
) -> SingleObjectiveResult:
    """Genetic minimisation of chamfer alone.

    With ``fix_n`` the point count is pinned at ``n_max`` so the cost
    objective plays no part; otherwise ``n`` is searched like any variable.
    """
    cfg = cfg or EvolutionConfig()
    if fix_n:
        problem = problem.with_bounds(problem.bounds.with_fixed_n())
    return _ga(problem, cfg, None, initial)


def min_achievable_cost(problem: CalibrationProblem) -> float:
    return problem.evaluate(_with_n(np.zeros(N_VAR), problem.bounds.n_min)).comp_cost


def _with_n(x, n: float) -> np.ndarray:
    y = np.array(x, dtype=np.float64)
    y[6] = n
    return y


def epsilon_constraint_minimize(
    problem: CalibrationProblem,
    epsilon: float,
    cfg: EvolutionConfig | None = None,
    initial=None,
) -> EpsilonResult:
    """Minimise chamfer subject to ``comp_cost <= epsilon``.

    Infeasible individuals rank behind every feasible one, ordered among
    themselves by how far they exceed ``epsilon``. If no evaluated genome is
    feasible the result is an infeasible marker.
    """
    cfg = cfg or EvolutionConfig()
    if problem.cost_mode == "proxy" and epsilon + FEASIBILITY_TOL < min_achievable_cost(problem):
        return EpsilonResult(float(epsilon), False, None, None, 0)
    res = _ga(problem, cfg, float(epsilon), initial)
    if res.objectives.comp_cost > epsilon + FEASIBILITY_TOL:
        return EpsilonResult(float(epsilon), False, None, None, res.evaluations)
    return EpsilonResult(float(epsilon), True, res.best, res.objectives, res.evaluations)


def epsilon_budget(cfg: EvolutionConfig, fraction: float = EPSILON_BUDGET_FRACTION) -> EvolutionConfig:
    """A config with about ``fraction`` of ``cfg``'s evaluations (population and generations scaled by sqrt)."""
    s = math.sqrt(fraction)
    pop = max(4, int(round(cfg.population_size * s / 2)) * 2)
    gens = max(1, int(round(cfg.generations * s)))
    return cfg.with_(population_size=pop, generations=gens)


def epsilon_constraint_sweep(
    problem: CalibrationProblem,
    epsilons,
    cfg: EvolutionConfig | None = None,
    warm_start: bool = True,
) -> list[EpsilonResult]:
    """One constrained run per epsilon, in ascending order.

    With ``warm_start`` each run's initial population includes the best
    solution of the previous (tighter) run, which is feasible for the looser
    bound; elitism then guarantees chamfer is non-increasing in epsilon.
    Results are returned in the order ``epsilons`` was given.
    """
    cfg = cfg or EvolutionConfig()
    eps = [float(e) for e in epsilons]
    results: dict[int, EpsilonResult] = {}
    carry = None
    for i in sorted(range(len(eps)), key=lambda k: (eps[k], k)):
        r = epsilon_constraint_minimize(problem, eps[i], cfg, initial=carry if warm_start else None)
        results[i] = r
        if r.feasible:
            carry = r.solution[None, :]
    return [results[i] for i in range(len(eps))]


EPSILON_COLUMNS = ("epsilon", "feasible", "chamfer", "comp_cost", *VARIABLES)


def epsilon_results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPSILON_COLUMNS)
    for r in results:
        if r.feasible:
            vals = [repr(r.achieved.chamfer), repr(r.achieved.comp_cost), *(repr(float(v)) for v in r.solution)]
        else:
            vals = [""] * (2 + N_VAR)
        w.writerow([repr(r.epsilon), int(r.feasible), *vals])
    return buf.getvalue()

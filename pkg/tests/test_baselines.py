import math

import numpy as np
import pytest

from calibmoo.baselines import (
    EPSILON_COLUMNS,
    epsilon_budget,
    epsilon_constraint_minimize,
    epsilon_constraint_sweep,
    epsilon_results_csv,
    min_achievable_cost,
    single_objective_minimize,
)
from calibmoo.evolution import EvolutionConfig, random_population
from calibmoo.objectives import ObjectiveVector
from calibmoo.problem import CalibrationBounds, CalibrationProblem

BOUNDS = CalibrationBounds(n_max=1000, n_min=100)


class Toy:
    bounds = BOUNDS
    cost_mode = "proxy"

    def evaluate(self, x):
        x = np.asarray(x)
        return ObjectiveVector(float(np.sum(x[:6] ** 2) + 100.0 / x[6]), float(2 * x[6] / 1000))


SMALL = EvolutionConfig(population_size=16, generations=12, seed=5)


def test_zero_generations_returns_best_initial():
    cfg = SMALL.with_(generations=0)
    res = single_objective_minimize(Toy(), cfg, fix_n=False)
    init = random_population(cfg.population_size, BOUNDS, np.random.default_rng(cfg.seed))
    vals = [Toy().evaluate(g).chamfer for g in init]
    np.testing.assert_array_equal(res.best, init[int(np.argmin(vals))])
    assert res.trace == [min(vals)]


def test_trace_is_non_increasing():
    res = single_objective_minimize(Toy(), SMALL.with_(generations=30), fix_n=False)
    assert len(res.trace) == 31
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.trace[-1] < res.trace[0]


def test_fixed_n_pins_the_point_count(truth_scene):
    problem = CalibrationProblem(truth_scene)
    res = single_objective_minimize(problem, EvolutionConfig(population_size=8, generations=2))
    assert res.best[6] == problem.bounds.n_max


def test_improves_when_start_excludes_the_truth(truth_scene):
    # nominal is the truth, so the optimum is the zero genome; the random start never contains it
    problem = CalibrationProblem(truth_scene)
    res = single_objective_minimize(problem, EvolutionConfig(population_size=12, generations=6, seed=1))
    assert res.trace[-1] < res.trace[0]


def test_epsilon_below_minimum_cost_is_infeasible():
    r = epsilon_constraint_minimize(Toy(), min_achievable_cost(Toy()) / 2, SMALL)
    assert not r.feasible and r.solution is None and r.achieved is None


def test_inactive_constraint_matches_unconstrained_run():
    free = single_objective_minimize(Toy(), SMALL, fix_n=False)
    r = epsilon_constraint_minimize(Toy(), 2.0, SMALL)
    assert r.feasible
    np.testing.assert_array_equal(r.solution, free.best)
    assert r.achieved == free.objectives


def test_results_satisfy_their_bounds():
    eps = [0.25, 0.5, 1.0, 1.5]
    for r in epsilon_constraint_sweep(Toy(), eps, SMALL):
        assert r.feasible and r.achieved.comp_cost <= r.epsilon + 1e-6


def test_warm_start_makes_chamfer_non_increasing_in_epsilon():
    eps = [1.5, 0.3, 0.9, 0.6]
    res = epsilon_constraint_sweep(Toy(), eps, SMALL)
    assert [r.epsilon for r in res] == eps
    by_eps = sorted(res, key=lambda r: r.epsilon)
    cham = [r.achieved.chamfer for r in by_eps]
    assert all(b <= a for a, b in zip(cham, cham[1:]))


def test_epsilon_csv_layout():
    res = epsilon_constraint_sweep(Toy(), [0.01, 1.0], SMALL)
    lines = epsilon_results_csv(res).splitlines()
    assert lines[0] == ",".join(EPSILON_COLUMNS)
    assert lines[1].split(",")[1] == "0" and lines[1].split(",")[2] == ""
    assert lines[2].split(",")[1] == "1" and len(lines[2].split(",")) == len(EPSILON_COLUMNS)


def test_budget_scaling():
    cfg = epsilon_budget(EvolutionConfig(population_size=100, generations=100), 0.25)
    assert (cfg.population_size, cfg.generations) == (50, 50)
    assert epsilon_budget(EvolutionConfig(population_size=4, generations=1), 0.01).population_size == 4
    assert math.isclose(cfg.evaluations / EvolutionConfig().evaluations, 0.25, rel_tol=0.02)

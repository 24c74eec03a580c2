import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calibmoo.evolution import (
    ARCHIVE_COLUMNS,
    LOG_COLUMNS,
    THREADS_ENV,
    EvaluationError,
    EvolutionConfig,
    ParetoArchive,
    archive_csv,
    crowding_distance,
    dominates,
    evolve,
    hypervolume_2d,
    make_offspring,
    non_dominated_sort,
    pm_perturb,
    polynomial_mutation,
    read_archive_csv,
    sbx_children,
    sbx_crossover,
    tournament,
)
from calibmoo.objectives import ObjectiveVector
from calibmoo.problem import CalibrationBounds, CalibrationProblem

BOUNDS = CalibrationBounds(n_max=1000, n_min=100)
objective_sets = st.integers(1, 40).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.integers(0, 8).map(float))
)


class Toy:
    """Cheap stand-in with a known trade-off: distance from the origin versus point count."""

    bounds = BOUNDS

    def __init__(self):
        self.calls = 0

    def evaluate(self, x):
        self.calls += 1
        x = np.asarray(x)
        return ObjectiveVector(float(np.sum(x[:6] ** 2) + 100.0 / x[6]), float(x[6] / 1000))


class Broken(Toy):
    def evaluate(self, x):
        raise RuntimeError("boom")


def _brute_fronts(f):
    left = list(range(len(f)))
    out = []
    while left:
        cur = [i for i in left if not any(dominates(f[j], f[i]) for j in left)]
        out.append(sorted(cur))
        left = [i for i in left if i not in cur]
    return out


# -- dominance and sorting

def test_dominates_examples():
    assert dominates((1, 1), (2, 2))
    assert not dominates((1, 2), (2, 1)) and not dominates((2, 1), (1, 2))
    assert not dominates((1, 1), (1, 1))


def test_sort_examples():
    assert non_dominated_sort([(5, 5)]) == [[0]]
    assert non_dominated_sort([(1, 2), (2, 1), (3, 3)]) == [[0, 1], [2]]
    assert non_dominated_sort([(4, 4)] * 5) == [[0, 1, 2, 3, 4]]
    assert non_dominated_sort(np.zeros((0, 2))) == []


@given(objective_sets)
def test_sort_matches_brute_force(f):
    assert non_dominated_sort(f) == _brute_fronts(f)


@given(objective_sets)
def test_fronts_partition_and_respect_dominance(f):
    fronts = non_dominated_sort(f)
    assert sorted(i for fr in fronts for i in fr) == list(range(len(f)))
    rank = {i: r for r, fr in enumerate(fronts) for i in fr}
    for i in range(len(f)):
        for j in range(len(f)):
            if dominates(f[i], f[j]):
                assert rank[i] < rank[j]


# -- crowding

def test_crowding_small_fronts_are_infinite():
    assert np.all(np.isinf(crowding_distance([(1, 2)])))
    assert np.all(np.isinf(crowding_distance([(1, 2), (2, 1)])))


def test_crowding_hand_value():
    d = crowding_distance([(0, 2), (1, 1), (2, 0)])
    assert d[1] == 2.0 and np.isinf(d[0]) and np.isinf(d[2])


def test_crowding_duplicates_are_finite_non_negative():
    d = crowding_distance([(1, 1)] * 5)
    interior = d[np.isfinite(d)]
    assert interior.size == 3 and np.all(interior >= 0)


@given(objective_sets.filter(lambda f: len(f) >= 3))
def test_crowding_has_infinite_extremes(f):
    d = crowding_distance(f)
    assert np.all((d >= 0) | np.isinf(d))
    assert np.isinf(d).sum() >= 2


# -- SBX

def test_sbx_identical_parents():
    p = np.array([0.1, -0.2, 0.3, 0.0, 0.1, -0.1, 500.0])
    cfg = EvolutionConfig(sbx_probability=1.0, sbx_variable_probability=1.0)
    c1, c2 = sbx_crossover(p, p, cfg, np.random.default_rng(3), BOUNDS)
    np.testing.assert_array_equal(c1, p)
    np.testing.assert_array_equal(c2, p)


def test_sbx_half_draw_returns_parents():
    p1 = np.array([0.1, 0.2, 0.3])
    p2 = np.array([-0.4, 0.0, 0.9])
    c1, c2 = sbx_children(p1, p2, np.full(3, 0.5), 15.0)
    np.testing.assert_array_equal(c1, p1)
    np.testing.assert_array_equal(c2, p2)


@given(st.floats(0.001, 0.999), st.floats(-1, 1), st.floats(-1, 1))
def test_sbx_children_preserve_the_parent_mean(u, a, b):
    c1, c2 = sbx_children([a], [b], [u], 15.0)
    assert (c1[0] + c2[0]) / 2 == pytest.approx((a + b) / 2, abs=1e-12)


def test_sbx_offspring_mean_matches_parent_mean():
    # wide bounds so repair never clips: the mean is then preserved exactly per pair
    bounds = CalibrationBounds(n_max=10**6, n_min=1, translation=100.0, rotation=100.0)
    p1 = np.array([0.2, -0.3, 0.1, 0.05, -0.02, 0.01, 400.0])
    p2 = np.array([-0.1, 0.4, 0.0, -0.05, 0.03, 0.02, 900.0])
    cfg = EvolutionConfig()
    rng = np.random.default_rng(7)
    kids = np.array([c for _ in range(5000) for c in sbx_crossover(p1, p2, cfg, rng, bounds)])
    mean = (p1 + p2) / 2
    sigma = kids.std(axis=0) / math.sqrt(len(kids))
    assert np.all(np.abs(kids.mean(axis=0) - mean) <= 3 * sigma + 1e-12)


def test_sbx_without_crossover_copies_parents():
    p1, p2 = np.zeros(7) + 150, np.ones(7) + 150
    c1, c2 = sbx_crossover(p1, p2, EvolutionConfig(sbx_probability=0.0), np.random.default_rng(0), BOUNDS)
    np.testing.assert_array_equal(c1, p1)
    np.testing.assert_array_equal(c2, p2)


# -- polynomial mutation

def test_pm_probability_zero_is_identity():
    x = np.array([0.1, 0.2, -0.3, 0.1, 0.0, -0.2, 300.0])
    y = polynomial_mutation(x, EvolutionConfig(pm_probability=0.0), np.random.default_rng(0), BOUNDS)
    np.testing.assert_array_equal(y, x)


def test_pm_half_draw_is_zero_perturbation():
    x = np.array([0.1, 0.2, -0.3, 0.1, 0.0, -0.2, 300.0])
    np.testing.assert_array_equal(pm_perturb(x, BOUNDS.lower, BOUNDS.upper, np.full(7, 0.5), 20.0), x)


def test_pm_stays_in_bounds_over_many_trials():
    rng = np.random.default_rng(11)
    lo, hi = BOUNDS.lower, BOUNDS.upper
    x = rng.uniform(lo, hi, size=(100_000, 7))
    u = rng.random((100_000, 7))
    y = np.array([pm_perturb(a, lo, hi, b, 20.0) for a, b in zip(x[:2000], u[:2000])])
    assert np.all(y >= lo) and np.all(y <= hi)
    # the same map vectorised over all 10^5 rows
    y = pm_perturb(x, lo, hi, u, 20.0)
    assert np.all(y >= lo) and np.all(y <= hi)


@given(st.floats(0, 1), st.floats(0, 1))
def test_pm_direction_follows_the_draw(pos, u):
    x = np.array([-1.5 + 3 * pos])
    y = pm_perturb(x, [-1.5], [1.5], [u], 20.0)[0]
    if u < 0.5:
        assert y <= x[0] + 1e-12
    else:
        assert y >= x[0] - 1e-12


# -- archive and hypervolume

def test_hypervolume_examples():
    assert hypervolume_2d([(0, 0)], (1, 1)) == 1.0
    assert hypervolume_2d([(0, 0.5), (0.5, 0)], (1, 1)) == 0.75
    assert hypervolume_2d(np.zeros((0, 2)), (1, 1)) == 0.0
    with pytest.raises(ValueError):
        hypervolume_2d([(2, 0)], (1, 1))


@given(objective_sets)
def test_hypervolume_matches_grid_count(f):
    # integer grid: count unit cells dominated by some point
    ref = (9.0, 9.0)
    cells = sum(
        1 for a in range(9) for b in range(9)
        if any(p[0] <= a and p[1] <= b for p in f)
    )
    assert hypervolume_2d(f, ref) == cells


@given(objective_sets)
def test_archive_is_mutually_non_dominated_and_sorted(f):
    a = ParetoArchive()
    a.update(np.zeros((len(f), 7)), f)
    objs = a.objectives
    assert np.all(np.diff(objs[:, 0]) > 0)
    assert np.all(np.diff(objs[:, 1]) < 0)
    brute = {tuple(f[i]) for i in non_dominated_sort(f)[0]}
    assert {tuple(o) for o in objs} == brute


@given(objective_sets, objective_sets)
def test_archive_hypervolume_never_drops(f, g):
    a = ParetoArchive()
    a.update(np.zeros((len(f), 7)), f)
    before = a.hypervolume((9, 9))
    a.update(np.zeros((len(g), 7)), g)
    assert a.hypervolume((9, 9)) >= before


def test_archive_csv_round_trip(tmp_path):
    a = ParetoArchive.from_arrays(np.arange(21, dtype=float).reshape(3, 7), [(1, 3), (2, 2), (3, 1)])
    path = tmp_path / "archive.csv"
    path.write_text(archive_csv(a))
    g, o = read_archive_csv(path)
    np.testing.assert_array_equal(g, a.genomes)
    np.testing.assert_array_equal(o, a.objectives)
    assert path.read_text().splitlines()[0] == ",".join(ARCHIVE_COLUMNS)


def test_archive_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n")
    with pytest.raises(ValueError, match="line 1"):
        read_archive_csv(p)
    p.write_text(",".join(ARCHIVE_COLUMNS) + "\n1,2,3\n")
    with pytest.raises(ValueError, match="line 2"):
        read_archive_csv(p)


def test_empty_archive_min_chamfer():
    with pytest.raises(ValueError):
        ParetoArchive().min_chamfer()


# -- selection plumbing

def test_tournament_prefers_better_and_lower_index():
    rng = np.random.default_rng(0)
    picks = [tournament(lambda a, b: a < b, 10, rng) for _ in range(2000)]
    # the worse of two uniform draws is never chosen
    assert np.mean(picks) < 4.5
    picks = [tournament(lambda a, b: False, 10, rng) for _ in range(500)]
    assert np.mean(picks) < 4.5


def test_offspring_are_unique_and_in_bounds():
    rng = np.random.default_rng(1)
    parents = rng.uniform(BOUNDS.lower, BOUNDS.upper, size=(20, 7))
    kids = make_offspring(parents, lambda a, b: a < b, EvolutionConfig(population_size=20), BOUNDS, rng)
    assert kids.shape == (20, 7)
    keys = {k.tobytes() for k in kids} | {p.tobytes() for p in parents}
    assert len(keys) == 40
    assert np.all(kids >= BOUNDS.lower) and np.all(kids <= BOUNDS.upper)


# -- config

def test_config_validation():
    for bad in (dict(population_size=5), dict(population_size=2), dict(sbx_probability=1.5),
                dict(pm_eta=0), dict(generations=-1), dict(threads=0)):
        with pytest.raises(ValueError):
            EvolutionConfig(**bad)


def test_paper_scale_preset():
    cfg = EvolutionConfig.paper_scale(seed=4)
    assert (cfg.population_size, cfg.generations) == (1000, 200)
    assert (cfg.sbx_probability, cfg.sbx_eta, cfg.pm_eta) == (0.9, 15.0, 20.0)
    assert cfg.seed == 4 and cfg.evaluations == 201_000


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert EvolutionConfig().resolved_threads() == 3
    assert EvolutionConfig(threads=2).resolved_threads() == 2
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ValueError):
        EvolutionConfig().resolved_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert EvolutionConfig().resolved_threads() == 1


# -- the loop

def test_zero_generations_archive_is_initial_front():
    cfg = EvolutionConfig(population_size=30, generations=0, seed=2)
    pop, archive, log = evolve(Toy(), cfg)
    objs = np.array([ind.objectives for ind in pop])
    front = {tuple(objs[i]) for i in non_dominated_sort(objs)[0]}
    assert {tuple(o) for o in archive.objectives} == front
    assert len(log.rows) == 1


def test_same_seed_is_bit_identical():
    cfg = EvolutionConfig(population_size=20, generations=8, seed=9)
    a, b = evolve(Toy(), cfg), evolve(Toy(), cfg)
    assert a.log.to_csv() == b.log.to_csv()
    assert archive_csv(a.archive) == archive_csv(b.archive)


def test_threads_do_not_change_results():
    base = EvolutionConfig(population_size=20, generations=5, seed=3)
    a = evolve(Toy(), base)
    b = evolve(Toy(), base.with_(parallel_evaluation=True, threads=4))
    assert archive_csv(a.archive) == archive_csv(b.archive)


def test_log_shape_and_monotone_archive():
    cfg = EvolutionConfig(population_size=20, generations=10, seed=1)
    res = evolve(Toy(), cfg)
    assert len(res.log.rows) == 11
    assert res.log.to_csv().splitlines()[0] == ",".join(LOG_COLUMNS)
    assert res.log.column("evaluations")[-1] == res.evaluations
    hv = res.log.column("archive_hypervolume")
    assert all(b >= a for a, b in zip(hv, hv[1:]))


def test_callback_sees_every_generation():
    seen = []
    evolve(Toy(), EvolutionConfig(population_size=10, generations=4), callback=lambda g, a: seen.append(g))
    assert seen == [0, 1, 2, 3, 4]


def test_initial_population_is_used():
    seed = np.tile([0, 0, 0, 0, 0, 0, 1000.0], (2, 1))
    res = evolve(Toy(), EvolutionConfig(population_size=10, generations=0), initial=seed)
    assert res.archive.min_chamfer()[1].chamfer == pytest.approx(0.1)


def test_evaluation_errors_name_the_genome():
    with pytest.raises(EvaluationError, match="genome"):
        evolve(Broken(), EvolutionConfig(population_size=4, generations=1))


def test_improves_on_the_initial_population(decalibrated_scene):
    problem = CalibrationProblem(decalibrated_scene)
    res = evolve(problem, EvolutionConfig(population_size=20, generations=15, seed=0))
    best = res.log.column("best_chamfer")
    assert res.archive.min_chamfer()[1].chamfer < best[0]

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calibmoo.analysis import (
    FLAG_THRESHOLD,
    REPORT_COLUMNS,
    ROBUSTNESS_COLUMNS,
    correlation_matrix,
    innovization_report,
    parse_range,
    robustness_csv,
    robustness_sweep,
    select_knee,
)
from calibmoo.evolution import EvolutionConfig, ParetoArchive
from calibmoo.problem import CalibrationProblem


def _front(objs):
    objs = np.asarray(objs, dtype=float)
    return np.arange(len(objs) * 7, dtype=float).reshape(-1, 7), objs


def test_knee_on_the_chord():
    k = select_knee(_front([(0, 1), (0.5, 0.5), (1, 0)]))
    assert k.objectives == (0.5, 0.5) and k.score == pytest.approx(0.0, abs=1e-15)


def test_knee_below_the_chord():
    k = select_knee(_front([(0, 1), (0.1, 0.1), (1, 0)]))
    assert k.objectives == (0.1, 0.1)
    assert k.score == pytest.approx(abs(0.1 + 0.1 - 1) / math.sqrt(2))


def test_collinear_front_breaks_ties_by_lower_chamfer():
    k = select_knee(_front([(0, 1), (0.25, 0.75), (0.5, 0.5), (1, 0)]))
    assert k.objectives == (0.25, 0.75)


def test_knee_uses_normalised_objectives():
    # scaling one objective must not move the knee
    a = select_knee(_front([(0, 1), (0.2, 0.3), (0.6, 0.1), (1, 0)]))
    b = select_knee(_front([(0, 1000), (0.2, 300), (0.6, 100), (1, 0)]))
    assert a.index == b.index


def test_knee_needs_three_entries():
    with pytest.raises(ValueError, match="need ≥ 3 entries"):
        select_knee(_front([(0, 1), (1, 0)]))


def test_knee_caps_filter_first():
    g, o = _front([(0, 1), (0.1, 0.1), (0.5, 0.05), (1, 0)])
    k = select_knee((g, o), max_chamfer=0.6)
    assert k.index in (1, 2) and k.objectives[0] <= 0.6


def test_knee_accepts_an_archive():
    a = ParetoArchive.from_arrays(*_front([(1, 0), (0.1, 0.1), (0, 1)]))
    assert select_knee(a).objectives == (0.1, 0.1)


def test_perfect_correlation_is_flagged():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(50, 7))
    o = np.column_stack([g[:, 0], rng.normal(size=50)])
    rep = innovization_report((g, o))
    assert rep.matrix[0, 7] == pytest.approx(1.0)
    assert ("x", "chamfer", pytest.approx(1.0)) in rep.flagged


def test_independent_columns_stay_small():
    rng = np.random.default_rng(1)
    r = correlation_matrix(rng.uniform(size=(1000, 9)))
    off = r[~np.eye(9, dtype=bool)]
    assert np.all(np.abs(off) < 0.15)


def test_constant_column_correlates_zero():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 4))
    x[:, 2] = 3.0
    r = correlation_matrix(x)
    assert np.all(r[2] == 0) and np.all(r[:, 2] == 0)


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 9)), elements=st.floats(-1e3, 1e3)))
def test_correlation_matrix_is_symmetric_and_bounded(x):
    r = correlation_matrix(x)
    assert np.array_equal(r, r.T)
    assert np.all(np.abs(r) <= 1.0)


def test_report_csv_and_minimum_rows():
    rng = np.random.default_rng(3)
    rep = innovization_report((rng.normal(size=(20, 7)), rng.normal(size=(20, 2))))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "a,b,r,flagged"
    assert len(lines) == 1 + len(REPORT_COLUMNS) * (len(REPORT_COLUMNS) - 1) // 2
    assert all(abs(r) > FLAG_THRESHOLD for _, _, r in rep.flagged)
    with pytest.raises(ValueError):
        innovization_report((np.zeros((3, 7)), np.zeros((3, 2))))


def test_parse_range():
    assert parse_range("0.1:0.9:0.1") == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert parse_range("0.2, 0.5,0.7") == [0.2, 0.5, 0.7]
    for bad in ("1:2", "0.5:0.1:0.1", "0:1:0", ""):
        with pytest.raises(ValueError):
            parse_range(bad)


def test_robustness_sweep_is_deterministic(truth_scene):
    problem = CalibrationProblem(truth_scene)
    cfg = EvolutionConfig(population_size=6, generations=2, seed=4)
    a = robustness_sweep(problem, [0.3, 0.7], cfg)
    b = robustness_sweep(problem, [0.3, 0.7], cfg)
    assert robustness_csv(a) == robustness_csv(b)
    assert [p.w1 for p in a] == [0.3, 0.7]
    for p in a:
        assert p.error == pytest.approx(p.w1 * p.edge_chamfer + (1 - p.w1) * p.intensity_chamfer)
    assert robustness_csv(a).splitlines()[0] == ",".join(ROBUSTNESS_COLUMNS)
    with pytest.raises(ValueError):
        robustness_sweep(problem, [1.0], cfg)

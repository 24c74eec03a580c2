import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from calibmoo.features import EdgePointSet
from calibmoo.objectives import (
    EMPTY_PENALTY,
    WeightPair,
    chamfer_distance,
    computational_cost,
    weighted_chamfer,
)

coords = st.floats(0, 1000, allow_nan=False)
point_sets = st.integers(1, 30).flatmap(lambda n: arrays(np.float64, (n, 2), elements=coords))


def _brute(gt, est):
    return float(np.mean([min((g[0] - e[0]) ** 2 + (g[1] - e[1]) ** 2 for e in est) for g in gt]))


def test_identical_sets_have_zero_distance():
    s = EdgePointSet([[1, 2], [3, 4], [10, 0]])
    assert chamfer_distance(s, s) == 0.0


def test_single_pair_hand_value():
    assert chamfer_distance([[0, 0]], [[3, 4]]) == 25.0


def test_two_to_one_hand_value():
    assert chamfer_distance([[0, 0], [1, 0]], [[0, 0]]) == 0.5


def test_normalizations():
    gt = [[0, 0], [1, 0]]
    est = [[0, 0]]
    assert chamfer_distance(gt, est, "sum") == 1.0
    assert chamfer_distance(gt, est, "per_lidar", n_lidar=4) == 0.25
    with pytest.raises(ValueError):
        chamfer_distance(gt, est, "per_lidar")
    with pytest.raises(ValueError):
        chamfer_distance(gt, est, "median")


def test_empty_inputs():
    assert chamfer_distance([[0, 0]], np.zeros((0, 2))) == EMPTY_PENALTY
    with pytest.raises(ValueError):
        chamfer_distance(np.zeros((0, 2)), [[0, 0]])


@given(point_sets, point_sets)
def test_matches_brute_force(gt, est):
    assert abs(chamfer_distance(gt, est) - _brute(gt, est)) <= 1e-9 * max(1.0, _brute(gt, est))


@given(point_sets)
def test_self_distance_is_zero(a):
    assert chamfer_distance(a, a) == 0.0


@given(point_sets, point_sets, point_sets)
def test_adding_estimates_never_increases(gt, est, extra):
    assert chamfer_distance(gt, np.vstack([est, extra])) <= chamfer_distance(gt, est)


def test_weighted_degenerate_weights_equal_components():
    edge, inten, est = [[0, 0]], [[0, 3]], [[0, 1]]
    assert weighted_chamfer(edge, inten, est, WeightPair(1, 0)) == chamfer_distance(edge, est)
    assert weighted_chamfer(edge, inten, est, WeightPair(0, 1)) == chamfer_distance(inten, est)


def test_weighted_hand_value():
    # edge error 2.0, intensity error 4.0
    edge, est = [[0, 0], [0, 2]], [[1, 1]]
    inten, est_i = [[0, 3]], [[0, 1]]
    assert chamfer_distance(edge, est) == 2.0 and chamfer_distance(inten, est_i) == 4.0
    assert weighted_chamfer(edge, inten, est, WeightPair(0.5, 0.5), est_intensity=est_i) == 3.0


def test_zero_weight_term_may_have_empty_ground_truth():
    assert weighted_chamfer([[0, 0]], np.zeros((0, 2)), [[0, 1]], WeightPair(1, 0)) == 1.0


@given(point_sets, point_sets, point_sets)
def test_weighted_is_affine_in_w1(edge, inten, est):
    vals = [weighted_chamfer(edge, inten, est, WeightPair.from_w1(w)) for w in (0.2, 0.5, 0.8)]
    assert vals[1] == pytest.approx(0.5 * (vals[0] + vals[2]), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("w1,w2", [(0.5, 0.6), (-0.1, 1.1), (1.2, -0.2)])
def test_weight_pair_validation(w1, w2):
    with pytest.raises(ValueError):
        WeightPair(w1, w2)


def test_proxy_cost_anchors():
    assert computational_cost(1000, (100, 1000))[1] == 2.0
    assert computational_cost(500, (100, 1000))[1] == 1.0
    assert computational_cost(100, (100, 1000))[1] == 2 * 100 / 1000


@given(st.integers(100, 5000), st.integers(100, 5000))
def test_proxy_cost_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert computational_cost(lo, (100, 5000))[1] <= computational_cost(hi, (100, 5000))[1]


def test_measured_cost():
    br, total = computational_cost(50, (10, 100), "measured", (0.5, 200.0), (1.0, 400.0))
    assert (br.t_norm, br.m_norm, total) == (0.5, 0.5, 1.0)
    with pytest.raises(ValueError):
        computational_cost(50, (10, 100), "measured")
    with pytest.raises(ValueError):
        computational_cost(50, (10, 100), "measured", (1, 1), (0, 1))


def test_cost_argument_checks():
    with pytest.raises(ValueError):
        computational_cost(5, (10, 100))
    with pytest.raises(ValueError):
        computational_cost(50, (10, 100), "wallclock")

import numpy as np

from calibmoo.problem import correction_transform
from calibmoo.render import (
    CANDIDATE_COLOR,
    GT_COLOR,
    edge_coincidence,
    front_svg,
    lidar_edge_points,
    overlay_image,
)


def test_front_svg_is_deterministic_and_marks_the_knee():
    objs = [(1.0, 2.0), (2.0, 1.0), (5.0, 0.5)]
    a = front_svg(objs, knee=(2.0, 1.0))
    assert a == front_svg(objs, knee=(2.0, 1.0))
    assert a.startswith("<svg") and a.count("<circle") == 4 and "knee" in a


def test_front_svg_switches_to_log_axis():
    assert "log scale" in front_svg([(1.0, 2.0), (1e4, 0.1)])
    assert "log scale" not in front_svg([(1.0, 2.0), (50.0, 0.1)])


def test_front_svg_empty():
    assert "<circle" not in front_svg(np.zeros((0, 2)))


def test_truth_edges_coincide_with_image_edges(truth_scene):
    assert edge_coincidence(truth_scene, truth_scene.ground_truth) >= 0.95


def test_offset_edges_do_not_coincide(truth_scene):
    off = correction_transform([0.3, 0, 0, 0.05, 0, 0]).compose(truth_scene.ground_truth)
    assert edge_coincidence(truth_scene, off) < 0.5


def test_overlay_colours(truth_scene):
    off = correction_transform([0.3, 0, 0, 0, 0, 0]).compose(truth_scene.ground_truth)
    rgb = overlay_image(truth_scene, off)
    assert rgb.shape == (truth_scene.image.height, truth_scene.image.width, 3)
    flat = rgb.reshape(-1, 3)
    assert np.any(np.all(flat == GT_COLOR, axis=1))
    assert np.any(np.all(flat == CANDIDATE_COLOR, axis=1))
    assert len(lidar_edge_points(truth_scene, truth_scene.ground_truth)) > 50

import json
import math

import numpy as np
import pytest
from _nominal import FIXTURES, detection_problems, line_angle

from sympose.geometry import PointSet, normalize_point_set, random_rotations, rotation_from_axis_angle
from sympose.shapes import generate_shape, parse_shape
from sympose.symmetry import (
    DetectorConfig,
    SymmetrySet,
    classify_category,
    detect,
    detection_threshold,
    resolve_order,
)


@pytest.mark.parametrize("counts,cat", [((0, 0), "asymmetric"), ((0, 1), "cat2"), ((0, 13), "cat1"),
                                        ((1, 0), "cat3"), ((1, 3), "cat4"), ((2, 0), "cat5"), ((5, 9), "cat5")])
def test_category_table(counts, cat):
    assert classify_category(counts) == cat


def test_resolve_order():
    assert resolve_order([2, 4]) == 4
    assert resolve_order([2, 3, 6]) == 6
    assert resolve_order([3]) == 3
    assert resolve_order([4, 5]) == 5  # nothing divides: largest wins the tie
    assert resolve_order([2, 4, 5]) == 4
    assert resolve_order([]) is None


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(epsilon=0)
    with pytest.raises(ValueError):
        DetectorConfig(rho=1)
    with pytest.raises(ValueError):
        DetectorConfig(rho=8, max_order=6)
    assert abs(DetectorConfig(rho=6).theta_g - math.pi / 6) < 1e-15


def test_threshold_allowance_is_capped():
    P = normalize_point_set(generate_shape(parse_shape("cube", samples=200))).point_set
    cfg = DetectorConfig()
    thr = detection_threshold(P, cfg)
    assert cfg.epsilon * P.radius < thr <= 2 * cfg.epsilon * P.radius
    no_allow = DetectorConfig(resolution_allowance=0)
    assert detection_threshold(P, no_allow) == no_allow.epsilon * P.radius


@pytest.mark.parametrize("name", FIXTURES)
def test_detection_matches_nominal(models, name):
    assert detection_problems(name, models(name).sym) == []


def test_detection_follows_a_rotation():
    R = rotation_from_axis_angle(np.array([0.3, -0.5, 0.81]) / np.linalg.norm([0.3, -0.5, 0.81]), 0.7)
    P = generate_shape(parse_shape("pyramid:5"))
    sym = detect(PointSet(P.points @ R.T))
    assert sym.category == "cat2"
    (a,) = sym.geometric_axes()
    assert a.order == 5
    assert line_angle(a.axis, R[:, 2]) < math.radians(1)


def test_detection_ignores_scale_and_offset():
    P = generate_shape(parse_shape("pyramid:3"))
    sym = detect(PointSet(P.points * 37.0 + [5.0, -2.0, 1.0]))
    assert [a.order for a in sym.geometric_axes()] == [3]


def test_discrete_list_holds_signed_pairs(models):
    sym = models("pyramid:4").sym
    d = sym.discrete
    assert len(d) == 2 * len(sym.geometric_axes())
    for a, b in zip(d[0::2], d[1::2]):
        assert np.allclose(a.axis, -b.axis) and a.order == b.order


def test_symmetry_set_round_trip(models):
    sym = models("clamp").sym
    back = SymmetrySet.from_dict(json.loads(sym.to_json()))
    assert back.category == sym.category and back.radius == sym.radius
    assert all(np.array_equal(a.axis, b.axis) and a.order == b.order for a, b in zip(back.discrete, sym.discrete))
    assert np.array_equal(back.reference, sym.reference)


def test_noise_does_not_invent_symmetry():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(400, 3)) * [1.0, 0.6, 0.3]
    pts = pts @ random_rotations(1, rng)[0].T
    assert detect(pts).category == "asymmetric"


def test_degenerate_input_rejected():
    with pytest.raises(ValueError):
        detect(np.zeros((5, 3)))

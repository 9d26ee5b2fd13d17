import math

import numpy as np
import pytest

from sympose.geometry import (
    geodesic_distance,
    hausdorff_distance,
    is_rotation,
    random_rotations,
    rotation_from_axis_angle,
)
from sympose.groups import (
    SymmetryGroup,
    closure,
    cyclic,
    dihedral,
    group_axes,
    icosahedral,
    octahedral,
    tetrahedral,
)

Z = np.array([0.0, 0.0, 1.0])


def _closed(G):
    for a in G:
        for b in G:
            p = a @ b
            if min(np.abs(p - g).max() for g in G) > 1e-9:
                return False
    return True


@pytest.mark.parametrize("make,size", [(lambda: cyclic(5), 5), (lambda: dihedral(3), 6), (tetrahedral, 12),
                                       (octahedral, 24), (icosahedral, 60)])
def test_canonical_groups(make, size):
    G = make()
    assert len(G) == size
    assert all(is_rotation(g) for g in G)
    assert _closed(G)


def test_closure_rejects_infinite_generators():
    with pytest.raises(ValueError):
        closure([rotation_from_axis_angle(Z, 1.0)])


def test_octahedral_axes():
    orders = sorted(n for _, n in group_axes(octahedral()))
    assert orders == [2] * 6 + [3] * 4 + [4] * 3


def _brute_gap(elements, R):
    return min(geodesic_distance(g, R) for g in elements)


def test_finite_gap_matches_brute_force(rng):
    G = SymmetryGroup("finite", octahedral())
    Rs = random_rotations(50, rng)
    gaps = G.gap(Rs)
    for R, g in zip(Rs, gaps):
        assert abs(g - _brute_gap(G.elements, R)) < 1e-9
    assert np.all(G.gap(G.elements) < 1e-7)
    tiny = G.elements[5] @ rotation_from_axis_angle(Z, 1e-7)
    assert abs(G.gap(tiny) - 1e-7) < 1e-12


def test_continuous_gaps(rng):
    e = np.array([0.0, 0.6, 0.8])
    axial = SymmetryGroup("axial", axis=e)
    flip = SymmetryGroup("axial_flip", axis=e)
    for R in random_rotations(30, rng):
        a = math.acos(np.clip(e @ R @ e, -1, 1))
        assert abs(axial.gap(R) - a) < 1e-12
        assert abs(flip.gap(R) - min(a, math.pi - a)) < 1e-12
    assert SymmetryGroup("full").gap(random_rotations(1, rng)[0]) == 0.0
    for g in flip.random_elements(rng, 20):
        assert flip.contains(g) and is_rotation(g)
    with pytest.raises(ValueError):
        axial.act(e)


def test_random_words_stay_in_group(rng):
    G = SymmetryGroup("finite", dihedral(4), generators=[cyclic(4)[1], dihedral(4)[4]])
    W = G.random_elements(rng, 40, word_length=9)
    assert np.all(G.gap(W) < 1e-9)


def test_serialization_round_trip():
    G = SymmetryGroup("finite", cyclic(3), generators=[cyclic(3)[1]], name="C3")
    back = SymmetryGroup.from_dict(G.to_dict())
    assert back.name == "C3" and back.order == 3
    assert np.allclose(back.elements, G.elements, atol=1e-14)
    with pytest.raises(ValueError):
        SymmetryGroup("weird")


@pytest.mark.parametrize("name,gname,order", [("cube", "O", 24), ("pyramid:4", "C4", 4), ("clamp", "C2", 2),
                                              ("frame", "C1", 1)])
def test_group_from_detection(models, name, gname, order):
    m = models(name)
    assert m.group.name == gname and m.group.order == order
    # every group element is a near-symmetry of the samples
    pts = m.points.points
    for g in m.group.elements:
        assert hausdorff_distance(pts, pts @ g.T) <= m.sym.threshold


def test_continuous_groups_from_detection(models):
    assert models("cone").group.kind == "axial"
    cyl = models("cylinder").group
    assert cyl.kind == "axial_flip" and abs(abs(cyl.axis[2]) - 1) < 1e-3

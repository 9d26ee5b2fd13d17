import math

import numpy as np
import pytest

from sympose.geometry import geodesic_distance, random_rotations, rotation_from_axis_angle
from sympose.landscape import (
    Landscape,
    NeighborGraph,
    build_neighbor_graph,
    descend_to_minima,
    descent_pointers,
    evaluate_landscape,
    export_landscape,
    follow,
    sample_so3,
    slice_1d,
)
from sympose.metrics import amgpd_batch


@pytest.fixture(scope="module")
def grid():
    Rs = sample_so3(10_000)
    return Rs, build_neighbor_graph(Rs, 12)


def _brute_neighbors(Rs, k):
    N = len(Rs)
    D = np.array([geodesic_distance(np.broadcast_to(R, Rs.shape), Rs) for R in Rs])
    np.fill_diagonal(D, np.inf)
    nb = [set(np.argsort(D[i], kind="stable")[:k]) for i in range(N)]
    return [sorted(nb[i] | {j for j in range(N) if i in nb[j]}) for i in range(N)]


def test_sample_properties(grid):
    Rs, g = grid
    assert np.array_equal(Rs[0], np.eye(3))
    assert np.array_equal(sample_so3(500, seed=3), sample_so3(500, seed=3))
    assert not np.allclose(sample_so3(500, seed=3)[1:], sample_so3(500, seed=4)[1:])
    assert math.degrees(g.max_gap) < 15.0
    assert g.max_gap / g.nn_gap.min() < 3.0
    assert np.allclose(np.einsum("nij,nkj->nik", Rs, Rs), np.eye(3), atol=1e-12)
    with pytest.raises(ValueError):
        sample_so3(0)


def test_graph_matches_brute_force():
    Rs = sample_so3(300, seed=1)
    g = build_neighbor_graph(Rs, 6)
    assert [list(n) for n in g.neighbors] == _brute_neighbors(Rs, 6)


def test_graph_is_symmetric(grid):
    _, g = grid
    for i in range(0, len(g.neighbors), 97):
        for j in g.neighbors[i]:
            assert i in g.neighbors[j]


def test_identity_neighbors_are_close(grid):
    Rs, g = grid
    d = geodesic_distance(np.broadcast_to(Rs[0], (len(g.neighbors[0]), 3, 3)), Rs[g.neighbors[0]])
    assert d.max() <= 2 * g.max_gap


def test_complete_graph():
    Rs = sample_so3(40)
    g = build_neighbor_graph(Rs, 39)
    assert all(len(n) == 39 for n in g.neighbors)


def test_descent_pointer_ties_go_to_lowest_index():
    g = NeighborGraph([np.array([1, 2]), np.array([0]), np.array([0])], 0.0, np.zeros(3))
    p = descent_pointers(np.array([2.0, 1.0, 1.0]), g)
    assert p.tolist() == [1, 1, 2]
    assert follow(np.array([1, 2, 2])).tolist() == [2, 2, 2]


def test_evaluated_values(models, grid):
    Rs, g = grid
    m = models("pyramid:4")
    L = evaluate_landscape("mgpd", Rs, gp=m.gp, graph=g)
    assert L.values[0] == 0.0 and np.all(L.values >= 0) and len(L) == len(Rs)
    assert np.allclose(L.values, amgpd_batch(m.gp, _I(), Rs))
    s = L.sample(5)
    assert np.allclose(rotation_from_axis_angle(s.rotvec / np.linalg.norm(s.rotvec), np.linalg.norm(s.rotvec)),
                       s.rotation)
    sphere = evaluate_landscape("agpd", Rs, gp=models("sphere").gp, graph=g)
    assert np.all(sphere.values == 0.0)


def _I():
    from sympose.geometry import RigidTransform

    return RigidTransform()


def test_cylinder_zero_set(models, rng):
    m = models("cylinder")
    e = m.group.axis
    spins = rotation_from_axis_angle(np.broadcast_to(e, (20, 3)), rng.uniform(0, 2 * math.pi, 20))
    flips = m.group.random_elements(rng, 40)
    for R in np.concatenate([spins, flips]):
        assert amgpd_batch(m.gp, _I(), R[None])[0] < 1e-9
    other = random_rotations(300, rng)
    far = m.group.gap(other) > math.radians(10)
    assert np.all(amgpd_batch(m.gp, _I(), other[far]) > 0)


def test_right_composition_with_symmetries(models, rng):
    m = models("cube")
    Rs = random_rotations(50, rng)
    base = amgpd_batch(m.gp, _I(), Rs)
    for g in m.group.elements[::5]:
        assert np.abs(amgpd_batch(m.gp, _I(), Rs @ g) - base).max() < 1e-6


def test_descent_structure(models, grid):
    Rs, g = grid
    m = models("pyramid:4")
    L = evaluate_landscape("mgpd", Rs, gp=m.gp, graph=g)
    ptr = descent_pointers(L.values, g)
    assert np.all(L.values[ptr] <= L.values)  # monotone steps
    rep = descend_to_minima(L, m.group)
    for mn in rep.minima:
        assert all(L.values[mn.index] <= L.values[j] for j in g.neighbors[mn.index])
    assert sum(mn.basin for mn in rep.minima) == len(Rs)
    assert rep.all_correct
    # every element of C4 is reached by some minimum
    near = {int(np.argmin([geodesic_distance(el, mn.rotation) for el in m.group.elements])) for mn in rep.minima}
    assert near == set(range(4))


def test_cone_minima_lie_on_the_spin_circle(models, grid):
    Rs, g = grid
    m = models("cone")
    rep = descend_to_minima(evaluate_landscape("agpd", Rs, gp=m.gp, graph=g), m.group)
    assert rep.all_correct
    assert all(mn.gap < rep.tolerance for mn in rep.minima)


@pytest.mark.xfail(strict=True, reason="discrete descent stalls at the half-turn saddles of the basis-axis GP; "
                                       "see the decisions ledger")
def test_frame_single_minimum(models, grid):
    Rs, g = grid
    m = models("frame")
    rep = descend_to_minima(evaluate_landscape("agpd", Rs, gp=m.gp, graph=g), m.group)
    assert len(rep.minima) == 1 and rep.minima[0].index == 0


def test_frame_spurious_terminals_are_not_continuum_minima(models):
    # the extra terminals sit on half-turns about basis axes, where the metric
    # still decreases along the twist about that axis
    gp = models("frame").gp
    x = np.eye(3)[0]
    twist = rotation_from_axis_angle(np.broadcast_to(x, (3, 3)), np.array([math.pi, math.pi - 0.05, math.pi - 0.1]))
    v = amgpd_batch(gp, _I(), twist)
    assert v[0] > v[1] > v[2]


def test_slice(models):
    m = models("pyramid:4")
    (e,) = [a.axis for a in m.sym.geometric_axes()]
    deg, d = slice_1d("mgpd", e, steps=360, gp=m.gp)
    assert deg[0] == 0.0 and deg[-1] == 360.0 and len(deg) == 361
    assert d[0] == 0.0
    assert np.all(d[[90, 180, 270, 360]] < 1e-9 * m.radius)
    with pytest.raises(ValueError):
        slice_1d("mgpd", np.array([0.0, 0.0, 2.0]), gp=m.gp)


def test_clamp_add_s_slice_has_interior_minimum(models):
    m = models("clamp")
    deg, d = slice_1d("adds", np.array([1.0, 0.0, 0.0]), steps=72, points=m.points.points)
    inner = d[1:-1]
    k = int(np.argmin(inner[10:-10])) + 11
    assert d[k] > 0 and d[k] < d[k - 1] and d[k] < d[k + 1]
    assert abs(deg[k] - 180) <= 30


def test_export(models, tmp_path):
    m = models("clamp")
    Rs = sample_so3(500)
    L = evaluate_landscape("mgpd", Rs, gp=m.gp)
    rep = descend_to_minima(L, m.group)
    a = export_landscape(L, rep, tmp_path / "a.csv", header="# h\n")
    b = export_landscape(L, rep, tmp_path / "b.csv", header="# h\n")
    assert a[0].read_bytes() == b[0].read_bytes() and a[1].read_bytes() == b[1].read_bytes()
    lines = a[0].read_text().splitlines()
    assert lines[:2] == ["# h", "v_x,v_y,v_z,d"] and len(lines) == 2 + len(Rs)
    minima_rows = a[1].read_text().splitlines()[2:]
    terminals = set(np.unique(rep.terminals).tolist())
    assert len(minima_rows) == len(rep.minima)
    assert all(int(r.split(",")[0]) in terminals for r in minima_rows)
    (j,) = export_landscape(L, rep, tmp_path / "r.json", format="json")
    assert '"all_correct"' in j.read_text()
    with pytest.raises(ValueError):
        export_landscape(L, rep, tmp_path / "x.bin", format="bin")
    with pytest.raises(OSError):
        export_landscape(L, rep, tmp_path / "missing" / "x.csv")


def test_landscape_container():
    Rs = sample_so3(10)
    L = Landscape(Rs, np.zeros((10, 3)), np.zeros(10), build_neighbor_graph(Rs, 4))
    assert len(L) == 10

"""Loss landscapes over SO(3) and the minima found by discrete descent.

The ground truth is the identity; every sample rotation ``R_i`` is scored
with ``metric(I, R_i)``. Each sample then walks to its smallest neighbor
until it can no longer improve, and the end points are clustered into minima
and compared against the proper-symmetry group.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    RigidTransform,
    matrix_to_quaternion,
    quaternion_to_matrix,
    random_rotations,
    rotation_from_axis_angle,
    to_rotation_vector,
)
from .groups import SymmetryGroup
from .metrics import make_batch_loss

# super-Fibonacci constants
_PHI = math.sqrt(2.0)
_PSI = 1.533751168755204288118041

MANIFOLD_TERMINALS = 10


def sample_so3(N, seed=0):
    """``N`` quasi-uniform rotations; sample 0 is the identity.

    The remaining ``N - 1`` come from a super-Fibonacci spiral, turned by a
    seeded random rotation so different seeds give different (but equally
    even) point sets.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be positive")
    n = N - 1
    s = np.arange(n) + 0.5
    r = np.sqrt(s / max(n, 1))
    R = np.sqrt(1.0 - s / max(n, 1))
    alpha = 2 * math.pi * s / _PHI
    beta = 2 * math.pi * s / _PSI
    q = np.stack([r * np.sin(alpha), r * np.cos(alpha), R * np.sin(beta), R * np.cos(beta)], axis=1)
    mats = quaternion_to_matrix(q) if n else np.empty((0, 3, 3))
    if seed is not None and n:
        W = random_rotations(1, np.random.default_rng(seed))[0]
        mats = W @ mats
    return np.concatenate([np.eye(3)[None], mats], axis=0)


def _quat_tree(Rs):
    q = matrix_to_quaternion(Rs).reshape(-1, 4)
    both = np.concatenate([q, -q], axis=0)
    return q, cKDTree(both)


def _chord_to_angle(c):
    return 2.0 * np.arccos(np.clip(1.0 - 0.5 * c * c, -1.0, 1.0))


@dataclass
class NeighborGraph:
    """Symmetric k-nearest-neighbor graph on a rotation sample."""

    neighbors: list
    max_gap: float  # largest nearest-neighbor geodesic gap (radians)
    nn_gap: np.ndarray

    def padded(self):
        width = max((len(n) for n in self.neighbors), default=0)
        out = np.full((len(self.neighbors), width), -1, dtype=np.int64)
        for i, n in enumerate(self.neighbors):
            out[i, :len(n)] = n
        return out


def build_neighbor_graph(Rs, k=12) -> NeighborGraph:
    """k nearest neighbors under geodesic distance, made symmetric."""
    Rs = np.asarray(Rs, dtype=float).reshape(-1, 3, 3)
    N = len(Rs)
    if k < 1:
        raise ValueError("k must be positive")
    k = min(int(k), N - 1)
    q, tree = _quat_tree(Rs)
    # a sample and its antipode never both land in the k closest, but ask
    # for a margin and deduplicate by sample index
    kq = min(2 * N, 2 * k + 2)
    dist, idx = tree.query(q, k=kq)
    idx = idx % N
    rows, cols, gaps = [], [], np.full(N, np.inf)
    for i in range(N):
        seen = []
        for d, j in zip(dist[i], idx[i]):
            if j == i or j in seen:
                continue
            if not seen:
                gaps[i] = _chord_to_angle(d)
            seen.append(j)
            if len(seen) == k:
                break
        rows.extend([i] * len(seen))
        cols.extend(seen)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    a = np.concatenate([rows, cols])
    b = np.concatenate([cols, rows])
    key = np.unique(a * N + b)
    a, b = key // N, key % N
    splits = np.searchsorted(a, np.arange(1, N))
    neighbors = np.split(b, splits)
    return NeighborGraph(neighbors, float(gaps.max()) if N > 1 else 0.0, gaps)


@dataclass
class LandscapeSample:
    rotation: np.ndarray
    rotvec: np.ndarray
    d: float
    neighbors: np.ndarray


@dataclass
class Landscape:
    rotations: np.ndarray
    rotvecs: np.ndarray
    values: np.ndarray
    graph: NeighborGraph
    metric: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def sample(self, i) -> LandscapeSample:
        return LandscapeSample(self.rotations[i], self.rotvecs[i], float(self.values[i]), self.graph.neighbors[i])


def evaluate_landscape(metric, Rs, gp=None, points=None, k=12, queries=None, graph=None) -> Landscape:
    """Score every rotation in ``Rs`` against the identity ground truth."""
    Rs = np.asarray(Rs, dtype=float).reshape(-1, 3, 3)
    f = make_batch_loss(metric, gp, points, queries=queries)
    values = np.asarray(f(RigidTransform.identity(), Rs, None), dtype=float)
    graph = graph or build_neighbor_graph(Rs, k)
    return Landscape(Rs, to_rotation_vector(Rs).reshape(-1, 3), values, graph, metric)


@dataclass
class Minimum:
    index: int
    rotation: np.ndarray
    rotvec: np.ndarray
    d: float
    basin: int
    gap: float  # radians to the nearest proper symmetry
    terminals: int
    manifold: bool

    def to_dict(self):
        return {
            "index": int(self.index),
            "v": [float(x) for x in self.rotvec],
            "d": float(self.d),
            "basin": int(self.basin),
            "nearest_sym_gap_deg": float(math.degrees(self.gap)),
            "terminals": int(self.terminals),
            "manifold": bool(self.manifold),
        }


@dataclass
class MinimaReport:
    minima: list
    max_gap: float
    tolerance: float
    all_correct: bool
    terminals: np.ndarray  # terminal sample of every start point

    def to_dict(self):
        return {
            "minima": [m.to_dict() for m in self.minima],
            "max_gap_deg": math.degrees(self.max_gap),
            "tolerance_deg": math.degrees(self.tolerance),
            "all_correct": bool(self.all_correct),
        }


def descent_pointers(values, graph: NeighborGraph):
    """Index of the strictly smallest neighbor of each sample (self if none)."""
    nb = graph.padded()
    if nb.shape[1] == 0:
        return np.arange(len(values))
    nb_sorted = np.sort(np.where(nb < 0, np.iinfo(np.int64).max, nb), axis=1)
    valid = nb_sorted != np.iinfo(np.int64).max
    nb_sorted = np.where(valid, nb_sorted, 0)
    vals = np.where(valid, values[nb_sorted], np.inf)
    j = np.argmin(vals, axis=1)  # first occurrence = lowest index on ties
    best = nb_sorted[np.arange(len(values)), j]
    better = vals[np.arange(len(values)), j] < values
    return np.where(better, best, np.arange(len(values)))


def follow(pointers):
    term = pointers.copy()
    while True:
        nxt = term[term]
        if np.array_equal(nxt, term):
            return term
        term = nxt


def descend_to_minima(landscape: Landscape, group: SymmetryGroup | None = None,
                      merge_factor=2.0) -> MinimaReport:
    """Descend from every sample and cluster the terminal points."""
    values = landscape.values
    g = landscape.graph
    term = follow(descent_pointers(values, g))
    uniq, counts = np.unique(term, return_counts=True)
    radius = merge_factor * g.max_gap
    # single-linkage clustering of terminals within the merge radius
    q = matrix_to_quaternion(landscape.rotations[uniq]).reshape(-1, 4)
    tree = cKDTree(np.concatenate([q, -q], axis=0))
    chord = math.sqrt(2.0 - 2.0 * math.cos(radius / 2.0))
    parent = np.arange(len(uniq))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    m = len(uniq)
    for a, b in tree.query_pairs(chord):
        a, b = a % m, b % m
        if a == b:
            continue
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(m)])
    gaps = group.gap(landscape.rotations[uniq]) if group is not None else np.full(m, np.nan)
    gaps = np.atleast_1d(gaps)
    minima = []
    for root in np.unique(roots):
        members = np.flatnonzero(roots == root)
        vals = values[uniq[members]]
        best = members[np.lexsort((uniq[members], vals))[0]]
        idx = int(uniq[best])
        worst_gap = float(np.max(gaps[members]))
        minima.append(Minimum(idx, landscape.rotations[idx], landscape.rotvecs[idx], float(values[idx]),
                              int(counts[members].sum()), worst_gap, len(members),
                              len(members) > MANIFOLD_TERMINALS))
    minima.sort(key=lambda mm: (mm.d, mm.index))
    tol = 2.0 * g.max_gap
    ok = group is not None and all(mm.gap < tol for mm in minima)
    return MinimaReport(minima, g.max_gap, tol, bool(ok), term)


def slice_1d(metric, axis, steps=360, gp=None, points=None):
    """Metric along one rotation axis on the grid ``360 k / steps`` degrees, ``k = 0..steps``."""
    e = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-9:
        raise ValueError("axis must be a unit vector")
    if steps < 1:
        raise ValueError("steps must be positive")
    deg = 360.0 * np.arange(steps + 1) / steps
    Rs = rotation_from_axis_angle(np.broadcast_to(e, (len(deg), 3)), np.radians(deg))
    f = make_batch_loss(metric, gp, points)
    return deg, np.asarray(f(RigidTransform.identity(), Rs, None), dtype=float)


def _fmt(x):
    return format(float(x), ".17g")


def landscape_csv(landscape: Landscape, header=""):
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["v_x", "v_y", "v_z", "d"])
    for v, d in zip(landscape.rotvecs, landscape.values):
        w.writerow([_fmt(v[0]), _fmt(v[1]), _fmt(v[2]), _fmt(d)])
    return buf.getvalue()


def minima_csv(report: MinimaReport, header=""):
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "v_x", "v_y", "v_z", "d", "basin", "gap_deg", "terminals", "manifold"])
    for m in report.minima:
        w.writerow([m.index, _fmt(m.rotvec[0]), _fmt(m.rotvec[1]), _fmt(m.rotvec[2]), _fmt(m.d),
                    m.basin, _fmt(math.degrees(m.gap)), m.terminals, int(m.manifold)])
    return buf.getvalue()


def landscape_report(landscape: Landscape, report: MinimaReport, name="", extra=None):
    d = {"schema": 1, "object": name, "metric": landscape.metric, "N": len(landscape)}
    d.update(report.to_dict())
    if extra:
        d.update(extra)
    return d


def export_landscape(landscape: Landscape, report: MinimaReport, path, format="csv", header="", name=""):
    """Write the landscape as CSV (plus ``<stem>_minima.csv``) or as one JSON file."""
    from pathlib import Path

    path = Path(path)
    fmt = format.lower()
    try:
        if fmt == "csv":
            path.write_text(landscape_csv(landscape, header))
            side = path.with_name(path.stem + "_minima.csv")
            side.write_text(minima_csv(report, header))
            return [path, side]
        if fmt == "json":
            d = landscape_report(landscape, report, name)
            d["samples"] = [{"v": [float(x) for x in v], "d": float(val)}
                            for v, val in zip(landscape.rotvecs, landscape.values)]
            path.write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
            return [path]
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    raise ValueError(f"unknown landscape format {format!r}")

"""Rotational symmetry detection for point sets.

Pipeline (``detect``):

1. ``enumerate_candidates`` tests every axis of a Fibonacci grid at every
   angle ``2*pi/i`` (``i = 2..M``) with the Hausdorff residual
   ``h(P, R(e, theta) P)``; near misses are refined by a pattern search on the
   axis sphere before the final test.
2. ``mean_shift_cluster`` merges candidate axes into modes, polishes each
   mode on the mean NN distance, re-verifies it and keeps one order per axis
   (the largest order whose angle is a common divisor of the verified angles).
3. ``extract_continuous`` flags axes that behave as continuous symmetries.
4. ``classify_category`` maps finite / continuous axis counts to one of the
   five categories (or ``asymmetric``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    NNIndex,
    PointSet,
    fibonacci_hemisphere,
    normalize_point_set,
    orthonormal_frame,
    rotation_from_axis_angle,
    rotation_residual,
)

CATEGORIES = ("asymmetric", "cat1", "cat2", "cat3", "cat4", "cat5")


@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters.

    ``epsilon`` is a fraction of the object radius. The acceptance threshold
    also adds ``resolution_allowance`` times the median nearest-neighbour
    spacing of the samples, capped at ``epsilon * radius``, so that sparse
    surface sampling does not hide continuous symmetries.
    ``generic_angle=None`` means ``pi / rho``, the angle farthest from every
    rotation of order ``<= rho``.
    """

    epsilon: float = 0.05
    rho: int = 6
    max_order: int = 9
    axis_candidates: int = 1000
    bandwidth: float = 0.1
    generic_angle: float | None = None
    resolution_allowance: float = 0.5
    screen_points: int = 300
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.rho < 2:
            raise ValueError("rho must be >= 2")
        if self.max_order < self.rho:
            raise ValueError("max_order must be >= rho")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.axis_candidates < 1:
            raise ValueError("axis_candidates must be positive")

    @property
    def theta_g(self):
        return self.generic_angle if self.generic_angle is not None else math.pi / self.rho

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "rho": self.rho,
            "max_order": self.max_order,
            "axis_candidates": self.axis_candidates,
            "bandwidth": self.bandwidth,
            "generic_angle": self.theta_g,
            "resolution_allowance": self.resolution_allowance,
            "screen_points": self.screen_points,
        }


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    order: int
    continuous: bool = False
    verified_orders: tuple = ()
    residual: float = 0.0

    def __post_init__(self):
        e = np.array(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(e)
        if n < 1e-12:
            raise ValueError("zero-length axis")
        e = e / n
        e.setflags(write=False)
        object.__setattr__(self, "axis", e)
        if int(self.order) < 2:
            raise ValueError("order must be >= 2")
        object.__setattr__(self, "order", int(self.order))

    @property
    def angle(self):
        return 2 * math.pi / self.order

    @property
    def rotation(self):
        return rotation_from_axis_angle(self.axis, self.angle)

    def flipped(self):
        return AxisAngle(-self.axis, self.order, self.continuous, self.verified_orders, self.residual)


@dataclass
class SymmetrySet:
    """Detected symmetry axis-angles of an object.

    ``discrete`` holds every axis-angle as a +/- pair; ``continuous`` is the
    flagged subset. ``threshold`` is the absolute Hausdorff bound that was
    applied, in the units of the analysed (normalized) points.
    """

    discrete: list
    category: str
    radius: float
    threshold: float
    config: DetectorConfig = field(default_factory=DetectorConfig)
    reference: np.ndarray | None = None

    @property
    def continuous(self):
        return [a for a in self.discrete if a.continuous]

    @property
    def epsilon(self):
        return self.config.epsilon

    @property
    def rho(self):
        return self.config.rho

    def geometric_axes(self):
        """One representative per +/- pair (the member listed first)."""
        return self.discrete[0::2]

    @property
    def n_continuous(self):
        return sum(a.continuous for a in self.geometric_axes())

    @property
    def n_finite(self):
        return sum(not a.continuous for a in self.geometric_axes())

    def to_dict(self):
        return {
            "schema": 1,
            "category": self.category,
            "radius": self.radius,
            "threshold": self.threshold,
            "axes": [
                {
                    "axis": [float(x) for x in a.axis],
                    "order": a.order,
                    "continuous": bool(a.continuous),
                    "verified_orders": list(a.verified_orders),
                    "residual": float(a.residual),
                }
                for a in self.discrete
            ],
            "reference": None if self.reference is None else [float(x) for x in self.reference],
            "config": self.config.as_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        cfg_d = dict(d.get("config", {}))
        cfg = DetectorConfig(**{k: v for k, v in cfg_d.items() if k in DetectorConfig.__dataclass_fields__})
        axes = [
            AxisAngle(a["axis"], a["order"], a.get("continuous", False),
                      tuple(a.get("verified_orders", ())), a.get("residual", 0.0))
            for a in d["axes"]
        ]
        ref = d.get("reference")
        return cls(axes, d["category"], float(d["radius"]), float(d.get("threshold", 0.0)), cfg,
                   None if ref is None else np.asarray(ref, dtype=float))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def detection_threshold(P: PointSet, cfg: DetectorConfig) -> float:
    r = P.radius
    base = cfg.epsilon * r
    if len(P) < 2 or cfg.resolution_allowance <= 0:
        return base
    d, _ = cKDTree(P.points).query(P.points, k=2)
    spacing = float(np.median(d[:, 1]))
    return base + min(cfg.resolution_allowance * spacing, base)


def _screen_subset(P: PointSet, count):
    from .shapes import resample_surface

    if len(P) <= count:
        return P.points
    return resample_surface(P, count).points


def _batch_residual(sub, index: NNIndex, axes, theta, cap=np.inf):
    """Residual lower bound for many axes at one angle, from a subsample.

    Values above ``cap`` are returned as inf.
    """
    axes = np.atleast_2d(axes)
    R = rotation_from_axis_angle(axes, np.full(len(axes), theta))
    m = sub.shape[0]
    fwd = np.einsum("aij,nj->ani", R, sub)
    dfwd = index.distances(fwd.reshape(-1, 3), cap).reshape(len(axes), m).max(axis=1)
    if abs(theta - math.pi) < 1e-12:
        return dfwd
    back = np.einsum("aji,nj->ani", R, sub)
    dback = index.distances(back.reshape(-1, 3), cap).reshape(len(axes), m).max(axis=1)
    return np.maximum(dfwd, dback)


def _mean_residual(sub, index: NNIndex, axes, theta):
    """Mean forward NN distance; smoother than the max for polishing an axis."""
    axes = np.atleast_2d(axes)
    R = rotation_from_axis_angle(axes, np.full(len(axes), theta))
    fwd = np.einsum("aij,nj->ani", R, sub)
    return index.distances(fwd.reshape(-1, 3)).reshape(len(axes), -1).mean(axis=1)


def _canonical_line(e):
    e = np.asarray(e, dtype=float)
    for c in e:
        if abs(c) > 1e-12:
            return e if c > 0 else -e
    return e


def _refine_axis(axis, objective, step, min_step=1e-3, max_evals=200):
    """Compass search on the unit sphere; ``objective`` takes a batch of axes."""
    e = np.asarray(axis, dtype=float)
    best = float(objective(e[None])[0])
    evals = 1
    while step > min_step and evals < max_evals and best > 0:
        F = orthonormal_frame(e)
        dirs = np.stack([F[:, 0], -F[:, 0], F[:, 1], -F[:, 1]])
        cand = e + step * dirs
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        vals = objective(cand)
        evals += 4
        k = int(np.argmin(vals))
        if vals[k] < best:
            e, best = cand[k], float(vals[k])
        else:
            step *= 0.5
    return e, best


def _fib_covering_radius(n):
    area = 4 * math.pi / n
    return math.sqrt(2 * area / math.sqrt(3)) / math.sqrt(3)


def resolve_order(verified, rho=None):
    """Order kept for an axis given the set of verified orders.

    Picks the order whose divisors account for the most verified orders
    (the largest such order on ties). When one verified order is a multiple
    of all others it wins outright; orders it does not explain are noise.
    """
    verified = sorted(set(int(v) for v in verified))
    if not verified:
        return None
    best, best_key = None, None
    for n in verified:
        key = (sum(1 for m in verified if n % m == 0), n)
        if best_key is None or key > best_key:
            best, best_key = n, key
    return best


def _check_centered(P: PointSet):
    if np.linalg.norm(P.centroid) > 1e-6 * max(P.radius, 1e-300):
        raise ValueError("point set must be centered at its centroid")


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def enumerate_candidates(P: PointSet, cfg: DetectorConfig | None = None, index: NNIndex | None = None,
                         threshold: float | None = None):
    """All axis-angles ``(e, 2*pi/i)`` with Hausdorff residual below threshold."""
    cfg = cfg or DetectorConfig()
    if not isinstance(P, PointSet):
        P = PointSet(P)
    _check_centered(P)
    index = index or NNIndex(P)
    thr = detection_threshold(P, cfg) if threshold is None else threshold
    pts = P.points
    sub = _screen_subset(P, cfg.screen_points)
    # one direction per line: the +/- grid has axis_candidates directions
    grid = fibonacci_hemisphere(max(1, cfg.axis_candidates // 2))
    delta = 1.25 * _fib_covering_radius(cfg.axis_candidates)
    r = P.radius

    grid_tree = cKDTree(grid)
    found = []
    for i in range(2, cfg.max_order + 1):
        theta = 2 * math.pi / i
        screen = thr + 2 * math.sin(theta / 2) * delta * r
        h = np.concatenate([_batch_residual(sub, index, grid[k:k + 250], theta, screen)
                            for k in range(0, len(grid), 250)])
        passing = np.flatnonzero(h < screen)
        for k in passing:
            e = grid[k]
            if h[k] >= thr:
                # only refine grid-local minima of the residual
                nbrs = grid_tree.query_ball_point(e, 2.5 * delta)
                if any((h[j], j) < (h[k], k) for j in nbrs):
                    continue
                e, _ = _refine_axis(e, lambda a: _batch_residual(sub, index, a, theta, screen),
                                    step=0.5 * delta)
            res = rotation_residual(pts, index, rotation_from_axis_angle(e, theta), thr)
            if res < thr:
                found.append(AxisAngle(e, i, residual=res))
                found.append(AxisAngle(-e, i, residual=res))
    return found


def _mean_shift_lines(X, weights, bandwidth, max_iter, tol):
    """Flat-kernel mean shift for axis lines (antipodal points identified)."""
    cos_bw = math.cos(bandwidth)
    modes = X.copy()
    for _ in range(max_iter):
        dots = modes @ X.T
        mask = np.abs(dots) >= cos_bw
        signed = np.where(mask, np.sign(dots) * weights[None, :], 0.0)
        new = signed @ X
        new /= np.linalg.norm(new, axis=1, keepdims=True)
        shift = np.max(np.linalg.norm(new - modes, axis=1))
        modes = new
        if shift < tol:
            break
    support = (np.abs(modes @ X.T) >= cos_bw) @ weights
    return modes, support


def mean_shift_cluster(candidates, bandwidth=0.1, points: PointSet | None = None,
                       cfg: DetectorConfig | None = None, index: NNIndex | None = None,
                       threshold: float | None = None):
    """Collapse candidate axis-angles to one +/- pair per symmetry axis.

    Without ``points`` the orders come from the candidates of each cluster.
    With ``points`` each mode is refined, then every order ``2..M`` is
    re-tested at the mode and only verified orders count.
    """
    if not candidates:
        return []
    cfg = cfg or DetectorConfig(bandwidth=bandwidth)
    lines = np.array([_canonical_line(c.axis) for c in candidates])
    orders = np.array([c.order for c in candidates])
    # unique lines carry the multiplicity as weight
    keys = np.round(lines, 9)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    weights = np.bincount(inverse).astype(float)
    X = np.array([lines[np.flatnonzero(inverse == u)[0]] for u in range(len(uniq))])

    modes, support = _mean_shift_lines(X, weights, bandwidth, cfg.max_iter, cfg.tol)

    # greedy merge: strongest mode first, absorb modes within the bandwidth
    order_idx = sorted(range(len(modes)), key=lambda k: (-support[k], k))
    kept, owner = [], np.full(len(modes), -1)
    cos_merge = math.cos(bandwidth)
    for k in order_idx:
        for j, m in enumerate(kept):
            if abs(float(modes[k] @ m)) >= cos_merge:
                owner[k] = j
                break
        else:
            owner[k] = len(kept)
            kept.append(modes[k])

    if points is not None:
        if not isinstance(points, PointSet):
            points = PointSet(points)
        index = index or NNIndex(points)
        thr = detection_threshold(points, cfg) if threshold is None else threshold
        sub = _screen_subset(points, cfg.screen_points)

    out = []
    accepted = []
    for j, mode in enumerate(kept):
        members = np.flatnonzero(owner[inverse] == j)
        cand_orders = sorted(set(orders[members].tolist()))
        mode = _canonical_line(mode)
        if points is None:
            verified = cand_orders
            res = min(candidates[m].residual for m in members)
        else:
            top_angle = 2 * math.pi / cand_orders[-1]

            def objective(a, t=top_angle):
                return _mean_residual(sub, index, a, t)

            mode, _ = _refine_axis(mode, objective, step=0.1 * bandwidth, min_step=1e-3)
            mode = _canonical_line(mode / np.linalg.norm(mode))
            # separate modes can refine onto the same axis
            if any(abs(float(mode @ m)) >= cos_merge for m in accepted):
                continue
            verified, res = [], math.inf
            for n in range(2, cfg.max_order + 1):
                h = rotation_residual(points.points, index, rotation_from_axis_angle(mode, 2 * math.pi / n), thr)
                if h < thr:
                    verified.append(n)
                    res = min(res, h)
        n = resolve_order(verified)
        if n is None:
            continue
        accepted.append(mode)
        a = AxisAngle(mode, n, verified_orders=tuple(verified), residual=float(res))
        out.append(a)
        out.append(a.flipped())

    # deterministic output order: highest order first, then lexicographic axis
    pairs = [(out[k], out[k + 1]) for k in range(0, len(out), 2)]
    pairs.sort(key=lambda p: (-p[0].order, tuple(-np.round(p[0].axis, 9))))
    return [a for p in pairs for a in p]


def extract_continuous(axes, P: PointSet, cfg: DetectorConfig | None = None,
                       index: NNIndex | None = None, threshold: float | None = None):
    """Flag axes whose order exceeds ``rho`` or that pass the generic-angle test.

    Continuous axes stay in the list; their order is reported as the
    largest verified order.
    """
    cfg = cfg or DetectorConfig()
    if not isinstance(P, PointSet):
        P = PointSet(P)
    index = index or NNIndex(P)
    thr = detection_threshold(P, cfg) if threshold is None else threshold
    out = []
    for k in range(0, len(axes), 2):
        a = axes[k]
        generic = rotation_residual(P.points, index, rotation_from_axis_angle(a.axis, cfg.theta_g), thr)
        cont = a.order > cfg.rho or generic < thr
        order = max(a.verified_orders or (a.order,)) if cont else a.order
        b = AxisAngle(a.axis, order, cont, a.verified_orders, a.residual)
        out.extend([b, b.flipped()])
    return out


def classify_category(sym_or_counts) -> str:
    """Category from the number of continuous and finite geometric axes."""
    if isinstance(sym_or_counts, SymmetrySet):
        n_c, n_f = sym_or_counts.n_continuous, sym_or_counts.n_finite
    else:
        n_c, n_f = sym_or_counts
    if n_c == 0 and n_f == 0:
        return "asymmetric"
    if n_c == 0:
        return "cat1" if n_f >= 2 else "cat2"
    if n_c == 1:
        return "cat3" if n_f == 0 else "cat4"
    return "cat5"


def detect(P, cfg: DetectorConfig | None = None) -> SymmetrySet:
    """Full detection pipeline on the centered, normalized point set."""
    cfg = cfg or DetectorConfig()
    if not isinstance(P, PointSet):
        P = PointSet(P)
    Pn = normalize_point_set(P).point_set
    if len(Pn) < 2 or Pn.radius <= 0:
        raise ValueError("point set is degenerate")
    index = NNIndex(Pn)
    thr = detection_threshold(Pn, cfg)
    cands = enumerate_candidates(Pn, cfg, index, thr)
    axes = mean_shift_cluster(cands, cfg.bandwidth, Pn, cfg, index, thr)
    axes = extract_continuous(axes, Pn, cfg, index, thr)
    norms = np.linalg.norm(Pn.points, axis=1)
    ref = Pn.points[int(np.argmax(norms))] / norms.max()
    sym = SymmetrySet(axes, "asymmetric", Pn.radius, thr, cfg, ref)
    sym.category = classify_category(sym)
    return sym

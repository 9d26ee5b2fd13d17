"""Rotation algebra, point-set containers, normalization and Hausdorff distance.

Conventions
-----------
- Quaternions are ``(w, x, y, z)``.
- Rotation matrices act on column vectors; a point cloud ``P`` of shape
  ``(n, 3)`` is rotated as ``P @ R.T``.
- Most rotation helpers accept batches with leading dimensions.
- Angles are in radians.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_TWO_PI = 2.0 * np.pi


def _workers():
    """kd-tree query threads; ``SYMPOSE_THREADS`` overrides (default: all cores)."""
    try:
        return int(os.environ.get("SYMPOSE_THREADS", "-1")) or -1
    except ValueError:
        return -1


def _as_finite(x, name="input"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

def quaternion_to_matrix(q):
    """Convert ``(w, x, y, z)`` quaternion(s) to rotation matrices.

    The quaternion is renormalized first, so ``q`` and ``-q`` give the same
    matrix.
    """
    q = _as_finite(q, "quaternion")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("zero-length quaternion")
    q = q / norm
    w, x, y, z = np.moveaxis(q, -1, 0)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    R = np.stack(
        [
            1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
            2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
            2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy),
        ],
        axis=-1,
    )
    return R.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quaternion(R):
    """Shepperd's method; returns quaternions with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    m = R.reshape(-1, 3, 3)
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    # squared magnitudes (times 4) of each component, pick the largest
    cand = np.stack(
        [1 + tr, 1 + 2 * m[:, 0, 0] - tr, 1 + 2 * m[:, 1, 1] - tr, 1 + 2 * m[:, 2, 2] - tr],
        axis=-1,
    )
    choice = np.argmax(cand, axis=-1)
    q = np.empty((m.shape[0], 4))
    for k in range(4):
        sel = choice == k
        if not np.any(sel):
            continue
        s = m[sel]
        big = 0.5 * np.sqrt(np.maximum(cand[sel, k], 0.0))
        inv = 0.25 / big
        if k == 0:
            q[sel] = np.stack([big, (s[:, 2, 1] - s[:, 1, 2]) * inv,
                               (s[:, 0, 2] - s[:, 2, 0]) * inv,
                               (s[:, 1, 0] - s[:, 0, 1]) * inv], axis=-1)
        elif k == 1:
            q[sel] = np.stack([(s[:, 2, 1] - s[:, 1, 2]) * inv, big,
                               (s[:, 0, 1] + s[:, 1, 0]) * inv,
                               (s[:, 0, 2] + s[:, 2, 0]) * inv], axis=-1)
        elif k == 2:
            q[sel] = np.stack([(s[:, 0, 2] - s[:, 2, 0]) * inv,
                               (s[:, 0, 1] + s[:, 1, 0]) * inv, big,
                               (s[:, 1, 2] + s[:, 2, 1]) * inv], axis=-1)
        else:
            q[sel] = np.stack([(s[:, 1, 0] - s[:, 0, 1]) * inv,
                               (s[:, 0, 2] + s[:, 2, 0]) * inv,
                               (s[:, 1, 2] + s[:, 2, 1]) * inv, big], axis=-1)
    q[q[:, 0] < 0] *= -1
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q.reshape(batch + (4,))


def rotation_from_axis_angle(axis, angle):
    """Rodrigues rotation about a unit ``axis`` by ``angle``.

    ``axis`` may be a batch ``(..., 3)``; ``angle`` broadcasts against it.
    """
    e = _as_finite(axis, "axis")
    n = np.linalg.norm(e, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("zero-length rotation axis")
    if np.any(np.abs(n - 1.0) > 1e-6):
        raise ValueError("rotation axis must be a unit vector")
    e = e / n
    theta = np.asarray(angle, dtype=float)
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    K = skew(e)
    outer = e[..., :, None] * e[..., None, :]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return c * eye + s * K + (1 - c) * outer


def skew(v):
    v = np.asarray(v, dtype=float)
    z = np.zeros(v.shape[:-1])
    x, y, w = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([z, -w, y, w, z, -x, -y, x, z], axis=-1).reshape(v.shape[:-1] + (3, 3))


def rotation_angle(R):
    """Rotation angle in ``[0, pi]`` of matrix/matrices ``R``."""
    q = matrix_to_quaternion(R)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def geodesic_distance(R1, R2):
    """Angle of ``R1.T @ R2``: the bi-invariant distance on SO(3)."""
    R1 = np.asarray(R1, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    rel = np.swapaxes(R1, -1, -2) @ R2
    return rotation_angle(rel)


def _canonical_half_turn(v):
    # at angle pi both v and -v are valid; keep the one whose first
    # nonzero component is positive
    v = np.array(v, dtype=float)
    flat = v.reshape(-1, 3)
    for row in flat:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return flat.reshape(v.shape)


def to_rotation_vector(R):
    """Axis times angle, with angle in ``[0, pi]``."""
    q = matrix_to_quaternion(R)
    w = q[..., 0]
    xyz = q[..., 1:]
    s = np.linalg.norm(xyz, axis=-1)
    theta = 2.0 * np.arctan2(s, w)
    scale = np.where(s > 1e-15, theta / np.where(s > 1e-15, s, 1.0), 2.0)
    v = xyz * scale[..., None]
    half = np.abs(theta - np.pi) < 1e-12
    if np.any(half):
        v = np.where(half[..., None], _canonical_half_turn(v), v)
    return v


def from_rotation_vector(v):
    v = _as_finite(v, "rotation vector")
    theta = np.linalg.norm(v, axis=-1)
    if np.any(theta > np.pi + 1e-9):
        raise ValueError("rotation vector longer than pi")
    half = 0.5 * theta
    # sin(x)/x with a series near zero
    small = theta < 1e-8
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(half) / np.where(small, 1.0, theta))
    q = np.concatenate([np.cos(half)[..., None], v * k[..., None]], axis=-1)
    return quaternion_to_matrix(q)


def exp_so3(v):
    """Exponential map without the ``|v| <= pi`` restriction."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    small = theta < 1e-8
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(0.5 * theta) / np.where(small, 1.0, theta))
    q = np.concatenate([np.cos(0.5 * theta)[..., None], v * k[..., None]], axis=-1)
    return quaternion_to_matrix(q)


def is_rotation(R, tol=1e-8):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3) or not np.all(np.isfinite(R)):
        return False
    eye = np.swapaxes(R, -1, -2) @ R
    return bool(np.all(np.abs(eye - np.eye(3)) < tol) and np.all(np.abs(np.linalg.det(R) - 1) < tol))


def random_rotations(n, rng):
    """Haar-uniform rotations from normalized Gaussian quaternions."""
    q = rng.standard_normal((n, 4))
    return quaternion_to_matrix(q)


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(R):
            raise ValueError("rotation is not a proper orthonormal matrix")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation contains non-finite values")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def as_matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


# ---------------------------------------------------------------------------
# Point sets
# ---------------------------------------------------------------------------

class PointSet:
    """Immutable, non-empty ``(n, 3)`` point array with cached centroid and radius."""

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("point set is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point set contains non-finite coordinates")
        pts.setflags(write=False)
        self._points = pts
        self._centroid = None
        self._radius = None

    @property
    def points(self):
        return self._points

    @property
    def centroid(self):
        if self._centroid is None:
            c = self._points.mean(axis=0)
            c.setflags(write=False)
            self._centroid = c
        return self._centroid

    @property
    def radius(self):
        if self._radius is None:
            self._radius = float(np.linalg.norm(self._points - self.centroid, axis=1).max())
        return self._radius

    def __len__(self):
        return self._points.shape[0]

    def __repr__(self):
        return f"PointSet(n={len(self)}, radius={self.radius:.4g})"

    def transformed(self, T: RigidTransform) -> "PointSet":
        return PointSet(T.apply(self._points))


@dataclass(frozen=True)
class NormalizedPointSet:
    """Points mapped into ``[-1, 1]^3`` by ``p' = gamma * (p - center)``."""

    point_set: PointSet
    center: np.ndarray
    scale: float
    degenerate: bool = False

    @property
    def points(self):
        return self.point_set.points

    def denormalize(self, points=None):
        pts = self.points if points is None else np.asarray(points, dtype=float)
        return pts / self.scale + self.center


def normalize_point_set(P) -> NormalizedPointSet:
    """Center on the mean and scale so the largest absolute coordinate is 1."""
    if not isinstance(P, PointSet):
        P = PointSet(P)
    center = P.centroid.copy()
    centered = P.points - center
    extent = float(np.abs(centered).max())
    if extent < 1e-300:
        return NormalizedPointSet(PointSet(centered), center, 1.0, degenerate=True)
    gamma = 1.0 / extent
    return NormalizedPointSet(PointSet(centered * gamma), center, gamma)


# ---------------------------------------------------------------------------
# Nearest neighbours and Hausdorff distance
# ---------------------------------------------------------------------------

class NNIndex:
    """Exact 3-D nearest-neighbour index (kd-tree).

    ``query`` breaks distance ties by the lowest stored index, so results are
    identical to a linear scan. ``distances`` is the fast path used by the
    Hausdorff and ADD-S inner loops.
    """

    def __init__(self, points):
        pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
        pts = pts.reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return self.points.shape[0]

    def distances(self, queries, upper_bound=np.inf):
        """Nearest distances; entries beyond ``upper_bound`` come back as inf."""
        d, _ = self._tree.query(np.asarray(queries, dtype=float).reshape(-1, 3),
                                distance_upper_bound=upper_bound, workers=_workers())
        return d

    def query(self, queries):
        """Return ``(distances, indices)`` of the nearest stored point."""
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        d, _ = self._tree.query(q)
        dist = np.empty(len(q))
        idx = np.empty(len(q), dtype=np.int64)
        # every stored point within the (slightly inflated) best distance is
        # a tie candidate; resolve exactly with the linear-scan formula
        ball = self._tree.query_ball_point(q, d * (1 + 1e-9) + 1e-12)
        for i, cand in enumerate(ball):
            cand = np.sort(np.asarray(cand, dtype=np.int64))
            diff = self.points[cand] - q[i]
            dd = np.sqrt(np.sum(diff * diff, axis=1))
            j = int(np.argmin(dd))
            dist[i] = dd[j]
            idx[i] = cand[j]
        return dist, idx


def build_nn_index(P) -> NNIndex:
    return NNIndex(P)


def directed_hausdorff(A, index_b: NNIndex) -> float:
    """``max_a min_b ||a - b||`` with the inner minimum answered by ``index_b``."""
    return float(index_b.distances(A).max())


def hausdorff_distance(A, B, index_b: NNIndex | None = None, index_a: NNIndex | None = None) -> float:
    """Symmetric Hausdorff distance between two point sets.

    Indices are built on demand when not supplied.
    """
    a = A.points if isinstance(A, PointSet) else np.asarray(A, dtype=float).reshape(-1, 3)
    b = B.points if isinstance(B, PointSet) else np.asarray(B, dtype=float).reshape(-1, 3)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("Hausdorff distance of an empty set")
    index_b = index_b or NNIndex(b)
    index_a = index_a or NNIndex(a)
    return max(directed_hausdorff(a, index_b), directed_hausdorff(b, index_a))


def rotation_residual(points, index: NNIndex, R, cap=np.inf) -> float:
    """Hausdorff distance between ``points`` and ``points`` rotated by ``R``.

    ``index`` must be built over ``points``. Uses the identity
    ``d(P -> RP) = d(R^T P -> P)`` so only one index is needed. Results at or
    above ``cap`` come back as inf (the kd-tree prunes more with a bound).
    """
    fwd = index.distances(points @ R.T, cap).max()
    if fwd == np.inf or np.allclose(R, R.T, atol=1e-15):
        # half-turns are their own inverse
        return float(fwd)
    back = index.distances(points @ R, cap).max()
    return float(max(fwd, back))


def fibonacci_sphere(n):
    """Deterministic, near-uniform unit vectors on the 2-sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def fibonacci_hemisphere(n):
    """``n`` near-uniform unit vectors with ``z >= 0``; with their antipodes
    they form a ``2n``-point Fibonacci-like sphere grid."""
    i = np.arange(n) + 0.5
    z = 1.0 - i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def orthonormal_frame(axis, reference=None):
    """Rotation matrix whose third column is ``axis``.

    The first column is ``reference`` projected off the axis when given and
    usable, otherwise a fixed world direction.
    """
    e = np.asarray(axis, dtype=float)
    e = e / np.linalg.norm(e)
    candidates = [] if reference is None else [np.asarray(reference, dtype=float)]
    candidates += [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])]
    for ref in candidates:
        u = ref - np.dot(ref, e) * e
        n = np.linalg.norm(u)
        if n > 1e-6:
            u = u / n
            break
    v = np.cross(e, u)
    return np.stack([u, v, e], axis=1)

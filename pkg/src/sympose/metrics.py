"""Pose distances: grouped-primitive distances, ADD / ADD-S and AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import NNIndex, PointSet, RigidTransform
from .primitives import GroupedPrimitives

METRIC_KINDS = ("agpd", "mgpd", "amgpd", "add", "adds")
_CHUNK = 1 << 22  # floats per temporary block


def _as_pose_arrays(Rs, ts):
    Rs = np.asarray(Rs, dtype=float).reshape(-1, 3, 3)
    ts = np.zeros((len(Rs), 3)) if ts is None else np.asarray(ts, dtype=float).reshape(-1, 3)
    if len(ts) == 1 and len(Rs) > 1:
        ts = np.broadcast_to(ts, (len(Rs), 3))
    if len(ts) != len(Rs):
        raise ValueError("rotation and translation batches differ in length")
    return Rs, ts


def group_nearest(gp: GroupedPrimitives, T_hat: RigidTransform, Rs, ts=None):
    """Per-group arrays of ``min_k ||T_hat p_j - T_i p_k||`` with shape ``(N, k_g)``.

    ``Rs``/``ts`` describe a batch of predicted poses ``T_i``.
    """
    Rs, ts = _as_pose_arrays(Rs, ts)
    out = []
    for g in gp.groups:
        hat = T_hat.apply(g)
        m = len(g)
        step = max(1, _CHUNK // (3 * m * m))
        rows = []
        for s in range(0, len(Rs), step):
            dot = np.einsum("nij,kj->nki", Rs[s:s + step], g) + ts[s:s + step, None, :]
            diff = hat[None, :, None, :] - dot[:, None, :, :]
            dist = np.sqrt(np.einsum("njki,njki->njk", diff, diff))
            rows.append(dist.min(axis=2))
        out.append(np.concatenate(rows, axis=0))
    return out


def agpd_batch(gp, T_hat, Rs, ts=None):
    per = group_nearest(gp, T_hat, Rs, ts)
    return np.mean([d.mean(axis=1) for d in per], axis=0)


def mgpd_batch(gp, T_hat, Rs, ts=None):
    per = group_nearest(gp, T_hat, Rs, ts)
    return np.max([d.max(axis=1) for d in per], axis=0)


def amgpd_batch(gp, T_hat, Rs, ts=None):
    if gp.category == "cat2":
        return mgpd_batch(gp, T_hat, Rs, ts)
    return agpd_batch(gp, T_hat, Rs, ts)


def agpd(gp: GroupedPrimitives, T_hat: RigidTransform, T_dot: RigidTransform) -> float:
    """Mean over groups of the mean nearest same-group primitive distance."""
    return float(agpd_batch(gp, T_hat, T_dot.rotation, T_dot.translation)[0])


def mgpd(gp: GroupedPrimitives, T_hat: RigidTransform, T_dot: RigidTransform) -> float:
    """Worst nearest same-group primitive distance over all groups."""
    return float(mgpd_batch(gp, T_hat, T_dot.rotation, T_dot.translation)[0])


def amgpd(gp, T_hat, T_dot):
    """MGPD for category-2 objects, AGPD otherwise."""
    return mgpd(gp, T_hat, T_dot) if gp.category == "cat2" else agpd(gp, T_hat, T_dot)


def _pts(P):
    return P.points if isinstance(P, PointSet) else np.asarray(P, dtype=float).reshape(-1, 3)


def add(P, T_hat: RigidTransform, T_dot: RigidTransform) -> float:
    p = _pts(P)
    if len(p) == 0:
        raise ValueError("empty point set")
    return float(np.linalg.norm(T_hat.apply(p) - T_dot.apply(p), axis=1).mean())


def add_s(P, T_hat: RigidTransform, T_dot: RigidTransform, index: NNIndex | None = None) -> float:
    """Mean distance from each ``T_hat p_j`` to the nearest ``T_dot p_k``.

    The search runs in the object frame, so ``index`` (built over ``P``) can
    be shared across poses.
    """
    p = _pts(P)
    if len(p) == 0:
        raise ValueError("empty point set")
    index = index or NNIndex(p)
    q = T_dot.inverse().apply(T_hat.apply(p))
    return float(index.distances(q).mean())


def add_batch(P, T_hat, Rs, ts=None):
    p = _pts(P)
    Rs, ts = _as_pose_arrays(Rs, ts)
    hat = T_hat.apply(p)
    out = np.empty(len(Rs))
    for i, (R, t) in enumerate(zip(Rs, ts)):
        out[i] = np.linalg.norm(hat - (p @ R.T + t), axis=1).mean()
    return out


def add_s_batch(P, T_hat, Rs, ts=None, index: NNIndex | None = None, queries=None):
    """ADD-S for a batch of predicted poses.

    ``queries`` optionally restricts the outer mean to a subset of points
    (the index still covers all of ``P``).
    """
    p = _pts(P)
    index = index or NNIndex(p)
    q0 = p if queries is None else np.asarray(queries, dtype=float)
    Rs, ts = _as_pose_arrays(Rs, ts)
    hat = T_hat.apply(q0)
    out = np.empty(len(Rs))
    for i, (R, t) in enumerate(zip(Rs, ts)):
        out[i] = index.distances((hat - t) @ R).mean()
    return out


def make_batch_loss(kind, gp=None, points=None, index=None, queries=None):
    """``f(T_hat, Rs, ts) -> values`` for one of ``METRIC_KINDS``."""
    kind = kind.lower().replace("-", "").replace("_", "")
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric {kind!r}; expected one of {', '.join(METRIC_KINDS)}")
    if kind in ("agpd", "mgpd", "amgpd"):
        if gp is None:
            raise ValueError(f"{kind} needs grouped primitives")
        fn = {"agpd": agpd_batch, "mgpd": mgpd_batch, "amgpd": amgpd_batch}[kind]
        return lambda T_hat, Rs, ts=None: fn(gp, T_hat, Rs, ts)
    if points is None:
        raise ValueError(f"{kind} needs a point set")
    if kind == "add":
        return lambda T_hat, Rs, ts=None: add_batch(points, T_hat, Rs, ts)
    index = index or NNIndex(_pts(points))
    return lambda T_hat, Rs, ts=None: add_s_batch(points, T_hat, Rs, ts, index, queries)


def evaluate_metric(kind, T_hat, T_dot, gp=None, points=None, index=None):
    f = make_batch_loss(kind, gp, points, index)
    return float(f(T_hat, T_dot.rotation, T_dot.translation)[0])


@dataclass
class AucCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    area: float


def auc(distances, max_threshold=0.1, steps=1000) -> AucCurve:
    """Accuracy-threshold curve on ``steps`` even thresholds in ``(0, max]``.

    Accuracy at ``tau`` counts distances strictly below ``tau``; the area is
    the trapezoid rule normalized by the threshold span.
    """
    d = np.asarray(distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("auc of an empty distance list")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and non-negative")
    if not max_threshold > 0:
        raise ValueError("max_threshold must be positive")
    tau = max_threshold * np.arange(1, steps + 1) / steps
    ds = np.sort(d)
    acc = np.searchsorted(ds, tau, side="left") / d.size
    span = tau[-1] - tau[0]
    area = float(np.trapezoid(acc, tau) / span) if span > 0 else float(acc[0])
    area = min(max(area, 0.0), 1.0)  # trapezoid rounding
    return AucCurve(tau, acc, area)

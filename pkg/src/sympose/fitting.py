"""Local pose descent under a chosen loss.

A pose is moved on the chart ``(w, u) -> (exp(w) R, t + u)`` around the
current estimate. Each iteration scores a backtracking (Armijo) step along
a central-difference gradient together with a few steps along a coarse
difference gradient, whose stencil spans the kinks of max-type losses, and
keeps the larger decrease. When neither improves, a coordinate pattern
search with a shrinking step takes over. Only improving steps are accepted,
so the loss never increases.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, exp_so3, random_rotations, rotation_from_axis_angle
from .groups import SymmetryGroup
from .metrics import make_batch_loss


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 300
    grad_step: float = 1e-4
    tol: float = 1e-6  # gradient-norm stop
    max_step: float = 1.0  # longest first trial step (chart units)
    armijo: float = 1e-4
    backtracks: int = 30
    pattern_step: float = 0.05
    pattern_min: float = 1e-6
    correct_angle_deg: float = 5.0
    correct_translation: float = 0.02  # times the object radius


@dataclass
class FitResult:
    pose: RigidTransform
    loss: float
    initial_loss: float
    iterations: int  # accepted steps
    converged: bool  # stopped by a stationarity test rather than the iteration cap
    correct: bool
    gap_deg: float
    translation_error: float
    history: list = field(default_factory=list)


def _moves(R, t, W):
    W = np.atleast_2d(W)
    return exp_so3(W[:, :3]) @ R, t + W[:, 3:]


def numerical_gradient(f, R, t, h=1e-4):
    """Central differences of ``f`` on the 6-D chart at ``(R, t)``."""
    E = np.eye(6) * h
    Rs, ts = _moves(R, t, np.concatenate([E, -E]))
    v = f(Rs, ts)
    return (v[:6] - v[6:]) / (2 * h)


def _armijo(f, R, t, g, gn, cur, alpha, c, chunk=6):
    """Backtracking along ``-g``; candidates are scored ``chunk`` at a time.

    Returns ``(Rs, ts, vals, k)`` with ``k`` indexing the accepted candidate
    in the last scored chunk (None if no step qualified).
    """
    for s in range(0, len(alpha), chunk):
        a = alpha[s:s + chunk]
        Rs, ts = _moves(R, t, -a[:, None] * g)
        vals = f(Rs, ts)
        ok = np.flatnonzero(vals <= cur - c * a * gn * gn)
        if ok.size:
            return Rs, ts, vals, int(ok[0])
    return None, None, None, None


def _kink_step(f, R, t, cur, cfg, pattern, dirs):
    """Improving step where the fine gradient is useless.

    Tries the negative of a coarse difference gradient (step = the current
    pattern size, which sees both sides of a kink), then the coordinate
    pattern; halves the pattern size on failure. Returns
    ``(k, Rs, ts, vals, pattern)`` with ``k`` indexing the accepted
    candidate, or ``k = None`` once the pattern size drops below
    ``pattern_min``.
    """
    while pattern >= cfg.pattern_min:
        g = numerical_gradient(f, R, t, pattern)
        gn = float(np.linalg.norm(g))
        W = pattern * dirs
        if gn > 0:
            alpha = 2.0 * pattern * 0.5 ** np.arange(6)
            W = np.concatenate([-(alpha / gn)[:, None] * g, W])
        Rs, ts = _moves(R, t, W)
        vals = f(Rs, ts)
        j = int(np.argmin(vals))
        if vals[j] < cur:
            return j, Rs, ts, vals, pattern
        pattern *= 0.5
    return None, None, None, None, pattern


def _pose_errors(group: SymmetryGroup | None, T_hat, R, t, radius):
    gap = float(group.gap(T_hat.rotation.T @ R)) if group is not None else 0.0
    terr = float(np.linalg.norm(t - T_hat.translation)) / radius
    return gap, terr


def fit_pose(loss, T_hat: RigidTransform, T_init: RigidTransform, config: FitConfig | None = None,
             group: SymmetryGroup | None = None, radius=1.0, gp=None, points=None, index=None,
             queries=None) -> FitResult:
    """Descend ``loss`` from ``T_init`` toward ``T_hat``.

    ``loss`` is a metric name (see ``metrics.METRIC_KINDS``) or a batch
    callable ``f(T_hat, Rs, ts)``. ``group`` decides whether the final pose
    counts as correct.
    """
    cfg = config or FitConfig()
    fb = loss if callable(loss) else make_batch_loss(loss, gp, points, index, queries)

    def f(Rs, ts):
        return np.asarray(fb(T_hat, Rs, ts), dtype=float)

    R = np.array(T_init.rotation)
    t = np.array(T_init.translation)
    cur = float(f(R[None], t[None])[0])
    start = cur
    history = [cur]
    pattern = cfg.pattern_step
    scale = cfg.pattern_step
    converged = False
    it = 0
    dirs = np.concatenate([np.eye(6), -np.eye(6)])
    while it < cfg.max_iter:
        if cur == 0.0:
            converged = True
            break
        g = numerical_gradient(f, R, t, cfg.grad_step)
        gn = float(np.linalg.norm(g))
        if gn < cfg.tol:
            converged = True
            break
        alpha = min(1.0, cfg.max_step / gn) * 0.5 ** np.arange(cfg.backtracks)
        Rs, ts, vals, k = _armijo(f, R, t, g, gn, cur, alpha, cfg.armijo)
        # a coarse difference direction straddles the kinks that make the
        # fine gradient zigzag; keep whichever candidate decreases more
        gc = numerical_gradient(f, R, t, scale)
        gcn = float(np.linalg.norm(gc))
        if gcn > 0:
            Rc, tc = _moves(R, t, -(2.0 * scale * 0.5 ** np.arange(6) / gcn)[:, None] * gc)
            vc = f(Rc, tc)
            j = int(np.argmin(vc))
            if vc[j] < cur and (k is None or vc[j] < vals[k]):
                Rs, ts, vals, k = Rc, tc, vc, j
                scale = min(cfg.max_step, 2.0 * scale)
            else:
                scale = max(cfg.pattern_min, 0.5 * scale)
        if k is None:
            k, Rs, ts, vals, pattern = _kink_step(f, R, t, cur, cfg, pattern, dirs)
            if k is None:
                converged = True
                break
            pattern = min(cfg.max_step, 2.0 * pattern)
        R, t, cur = Rs[k], ts[k], float(vals[k])
        it += 1
        history.append(cur)
    gap, terr = _pose_errors(group, T_hat, R, t, radius)
    correct = gap < math.radians(cfg.correct_angle_deg) and terr < cfg.correct_translation
    return FitResult(RigidTransform(R, t), cur, start, it, converged, bool(correct), math.degrees(gap), terr,
                     history)


def trial_poses(seed, trial, radius=1.0, init="uniform", flip_axis=(1.0, 0.0, 0.0), spread_deg=30.0,
                translation_noise=0.05):
    """Target and initial pose of one seeded trial.

    ``init="uniform"`` draws the starting rotation uniformly; ``"flip"``
    starts within ``spread_deg`` of a half-turn about ``flip_axis`` (object
    frame) applied to the target.
    """
    rng = np.random.default_rng([int(seed), int(trial)])
    R_hat = random_rotations(1, rng)[0]
    t_hat = rng.normal(0.0, 0.1 * radius, 3)
    if init == "uniform":
        R0 = random_rotations(1, rng)[0]
    elif init == "flip":
        a = np.asarray(flip_axis, dtype=float)
        F = rotation_from_axis_angle(a / np.linalg.norm(a), math.pi)
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        ang = math.radians(spread_deg) * rng.random() ** (1 / 3)
        R0 = R_hat @ F @ exp_so3(ang * w)
    else:
        raise ValueError(f"unknown init {init!r}")
    t0 = t_hat + rng.normal(0.0, translation_noise * radius, 3)
    return RigidTransform(R_hat, t_hat), RigidTransform(R0, t0)


def resolve_loss(kind, model):
    return model.gp.metric_kind if kind == "amgpd" else kind


def run_trials(model, loss, trials, seed=0, config: FitConfig | None = None, init="uniform", **kw):
    """Fit ``trials`` seeded starts; returns a list of ``FitResult``."""
    out = []
    for i in range(trials):
        T_hat, T0 = trial_poses(seed, i, model.radius, init, **kw)
        out.append(fit_pose(loss, T_hat, T0, config, model.group, model.radius, gp=model.gp,
                            points=model.points.points, index=model.index, queries=model.queries))
    return out


FIT_COLUMNS = ["shape", "loss", "trial", "correct", "gap_deg", "translation_error", "iterations", "final_loss"]


def batch_fit(models, losses, trials, seed=0, config: FitConfig | None = None, init="uniform", **kw):
    """Trial matrix over ``models`` x ``losses``.

    Returns ``(rows, summary)``: one row per trial and a success rate per
    (shape, loss). Every loss sees the same starting poses.
    """
    rows, summary = [], []
    for model in models:
        for loss in losses:
            res = run_trials(model, loss, trials, seed, config, init, **kw)
            for i, r in enumerate(res):
                rows.append({"shape": model.name, "loss": loss, "trial": i, "correct": int(r.correct),
                             "gap_deg": r.gap_deg, "translation_error": r.translation_error,
                             "iterations": r.iterations, "final_loss": r.loss})
            rate = sum(r.correct for r in res) / max(trials, 1)
            summary.append({"shape": model.name, "loss": loss, "trials": trials, "success_rate": rate})
    return rows, summary


def rows_csv(rows, columns=FIT_COLUMNS, header=""):
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()

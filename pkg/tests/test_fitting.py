import math

import numpy as np
import pytest

from sympose.fitting import (
    FIT_COLUMNS,
    FitConfig,
    batch_fit,
    fit_pose,
    numerical_gradient,
    rows_csv,
    run_trials,
    trial_poses,
)
from sympose.geometry import RigidTransform, exp_so3, geodesic_distance, rotation_from_axis_angle


def test_start_at_target_needs_no_iterations(models):
    m = models("pyramid:4")
    T_hat, _ = trial_poses(0, 0, m.radius)
    r = fit_pose("mgpd", T_hat, T_hat, group=m.group, radius=m.radius, gp=m.gp)
    assert r.iterations == 0 and r.correct and r.loss == 0.0 and r.converged


def test_history_is_monotone(models):
    m = models("clamp")
    for i in range(3):
        T_hat, T0 = trial_poses(1, i, m.radius)
        r = fit_pose("mgpd", T_hat, T0, group=m.group, radius=m.radius, gp=m.gp)
        assert np.all(np.diff(r.history) <= 0)
        assert r.loss <= r.initial_loss and len(r.history) == r.iterations + 1


def test_numerical_gradient_converges_under_step_halving(rng):
    A = rng.normal(size=(6, 6))
    A = A @ A.T
    c = rng.normal(size=3)

    def f(Rs, ts):
        # smooth function of the pose: squared distance of R c + t from a target
        return ((Rs @ c + ts - 1.0) ** 2).sum(-1)

    R = exp_so3(rng.normal(size=3) * 0.5)
    t = rng.normal(size=3)
    g1 = numerical_gradient(f, R, t, 1e-2)
    g2 = numerical_gradient(f, R, t, 5e-3)
    g3 = numerical_gradient(f, R, t, 1e-5)
    assert np.linalg.norm(g2 - g3) < 0.05 * np.linalg.norm(g3)
    assert np.linalg.norm(g2 - g3) < np.linalg.norm(g1 - g3)
    # analytic value: d/dw of |exp(w) R c + t - 1|^2 at w=0 is 2 (Rc) x (Rc + t - 1)
    r = R @ c
    res = r + t - 1.0
    assert np.allclose(g3, np.concatenate([2 * np.cross(r, res), 2 * res]), atol=1e-6)


def test_trial_poses(models):
    a = trial_poses(3, 7, 1.0, "flip")
    b = trial_poses(3, 7, 1.0, "flip")
    assert np.array_equal(a[1].rotation, b[1].rotation)
    F = rotation_from_axis_angle(np.array([1.0, 0, 0]), math.pi)
    for i in range(50):
        T_hat, T0 = trial_poses(0, i, 1.0, "flip", spread_deg=30)
        assert geodesic_distance(T_hat.rotation @ F, T0.rotation) <= math.radians(30) + 1e-12
    with pytest.raises(ValueError):
        trial_poses(0, 0, 1.0, "gaussian")


def test_correctness_uses_symmetry_coset(models):
    m = models("pyramid:4")
    (e,) = [a.axis for a in m.sym.geometric_axes()]
    T_hat = RigidTransform()
    quarter = RigidTransform(rotation_from_axis_angle(e, math.pi / 2))
    r = fit_pose("mgpd", T_hat, quarter, group=m.group, radius=m.radius, gp=m.gp)
    assert r.correct and r.gap_deg < 1e-6 and r.iterations == 0


def test_callable_loss_and_config():
    target = np.array([0.2, -0.1, 0.3])

    def f(T_hat, Rs, ts):
        return np.linalg.norm(ts - target, axis=1) + np.linalg.norm(Rs - np.eye(3), axis=(1, 2))

    r = fit_pose(f, RigidTransform(np.eye(3), target), RigidTransform(exp_so3([0.3, 0, 0.2])),
                 FitConfig(max_iter=500))
    assert r.loss < 1e-4 and r.correct


def test_batch_fit_is_deterministic(models):
    ms = [models("cone"), models("pyramid:4")]
    rows, summary = batch_fit(ms, ["amgpd", "agpd"], 3, seed=5)
    assert len(rows) == 2 * 2 * 3 and len(summary) == 4
    again, _ = batch_fit(ms, ["amgpd", "agpd"], 3, seed=5)
    assert rows_csv(rows, header="# x\n") == rows_csv(again, header="# x\n")
    text = rows_csv(rows)
    assert text.splitlines()[0] == ",".join(FIT_COLUMNS)
    assert all(0.0 <= s["success_rate"] <= 1.0 for s in summary)


def test_frame_fits_under_agpd(models):
    m = models("frame")
    res = run_trials(m, "amgpd", 10, seed=0)
    assert all(r.correct for r in res)

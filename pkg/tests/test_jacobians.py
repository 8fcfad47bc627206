import math

import numpy as np
import pytest

from conftest import random_pose
from factor_cases import CASES, K, numerical_jacobians, relative_error, worst_case_error
from uwslam.exceptions import InvalidResidual
from uwslam.geometry import CameraIntrinsics, Pose, Rotation, camera_mount, project
from uwslam.graph import C, Gaussian, Huber, L, PriorNavStateFactor, PriorPoseFactor, ReprojectionFactor, X, reprojection_residual
from uwslam.sensors import NavState

PINHOLE = CameraIntrinsics(920.3, 920.3, 800.0, 600.0, 1600, 1200)


@pytest.mark.parametrize("kind", sorted(CASES))
def test_analytic_matches_central_differences(kind):
    assert worst_case_error(kind, n=100) <= 1e-5


def test_reprojection_with_fixed_extrinsic(rng):
    for _ in range(50):
        f, values = CASES["Reprojection"](rng)
        fixed = ReprojectionFactor(X(0), L(0), "cam0", K, f.pixel, extrinsic=values[C(0)])
        assert len(fixed.keys) == 2
        err = relative_error(fixed.jacobians(values), numerical_jacobians(fixed, values))
        assert err <= 1e-5


def test_reprojection_consistent_landmark_is_zero(rng):
    s = NavState(random_pose(rng))
    ext = camera_mount(30.0)
    p_cam = np.array([0.2, -0.1, 3.0])
    lm = (s.pose @ ext).transform(p_cam)
    r = reprojection_residual(s, lm, ext, PINHOLE, project(PINHOLE, p_cam))
    assert np.max(np.abs(r)) <= 1e-9


def test_reprojection_lateral_shift():
    s = NavState(Pose.identity())
    r = reprojection_residual(s, (0.01, 0, 2.0), Pose.identity(), PINHOLE, (800, 600))
    assert abs(np.linalg.norm(r) - 920.3 * 0.01 / 2.0) <= 0.05
    assert np.linalg.norm(r) == pytest.approx(4.60, abs=0.05)


def test_reprojection_tilted_matches_composite_pose(rng):
    ext = Pose(Rotation.from_rotvec((-math.radians(30), 0, 0)), (0.1, 0.0, 0.05))
    for _ in range(50):
        s = NavState(random_pose(rng))
        composite = s.pose @ ext
        p_cam = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 6)])
        lm = composite.transform(p_cam)
        pixel = rng.uniform((0, 0), (1600, 1200))
        oracle = pixel - project(PINHOLE, composite.inverse().transform(lm))
        assert np.max(np.abs(reprojection_residual(s, lm, ext, PINHOLE, pixel) - oracle)) <= 1e-10


def test_reprojection_behind_camera():
    with pytest.raises(InvalidResidual):
        reprojection_residual(NavState(Pose.identity()), (0, 0, -2.0), Pose.identity(), PINHOLE, (800, 600))


def test_prior_at_anchor(rng):
    s = CASES["PriorNavState"](rng)[1][X(0)]
    f = PriorNavStateFactor(X(0), s)
    values = {X(0): s}
    assert np.max(np.abs(f.error_vector(values))) == 0
    assert np.allclose(f.jacobians(values)[0], np.eye(15), atol=1e-15)
    T = random_pose(rng)
    p = PriorPoseFactor(C(0), T)
    assert np.max(np.abs(p.error_vector({C(0): T}))) == 0
    assert np.allclose(p.jacobians({C(0): T})[0], np.eye(6), atol=1e-15)


def test_huber_irls_weight():
    delta = 1.345
    f = ReprojectionFactor(X(0), L(0), "cam0", PINHOLE, (800 + 2 * delta, 600), extrinsic=Pose.identity(), loss=Huber(delta))
    values = {X(0): NavState(Pose.identity()), L(0): np.array([0.0, 0.0, 1.0])}
    raw = f.noise.whiten(f.error_vector(values))
    assert np.linalg.norm(raw) == pytest.approx(2 * delta)
    e, Js = f.linearize(values)
    assert np.allclose(e, math.sqrt(0.5) * raw)
    assert np.allclose(Js[0], math.sqrt(0.5) * f.jacobians(values)[0])


def test_whitening_by_full_covariance(rng):
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + np.eye(3)
    W = Gaussian.from_covariance(cov).sqrt_info
    assert np.allclose(W.T @ W, np.linalg.inv(cov))

"""Random factor configurations and a central finite-difference Jacobian check."""

import numpy as np

from conftest import random_pose
from uwslam.geometry import CameraIntrinsics, project
from uwslam.graph import (
    DIMS,
    C,
    DepthFactor,
    DvlFactor,
    ImuFactor,
    L,
    PriorNavStateFactor,
    PriorPoseFactor,
    ReprojectionFactor,
    X,
    retract,
)
from uwslam.sensors import DepthSample, DvlSample, ImuBias, ImuSample, MotionOffset, NavState, preintegrate

FD_STEP = 1e-6
K = CameraIntrinsics(920.3, 920.3, 800.0, 600.0, 1600, 1200, k1=-0.05, k2=0.01)


def _state(rng):
    bias = ImuBias(rng.normal(0, 0.01, 3), rng.normal(0, 0.05, 3))
    return NavState(random_pose(rng, 10.0), rng.normal(0, 0.5, 3), bias)


def _batch(rng, n=40):
    w = rng.normal(0, 0.3, 3)
    f = rng.normal(0, 0.5, 3) - (0, 0, 9.81)
    return [ImuSample(k * 2_000_000, tuple(w + rng.normal(0, 0.05, 3)), tuple(f + rng.normal(0, 0.1, 3))) for k in range(n)]


def _offset(rng):
    pim = preintegrate(_batch(rng, int(rng.integers(1, 20))))
    return MotionOffset.from_preintegrated(pim, backward=bool(rng.integers(2)))


def reprojection_case(rng):
    s = _state(rng)
    ext = random_pose(rng, 0.3)
    u, v = rng.uniform((100, 100), (1500, 1100))
    z = rng.uniform(1.0, 8.0)
    xy = K.normalized((u, v))
    lm = (s.pose @ ext).transform(np.array([xy[0] * z, xy[1] * z, z]))
    pixel = project(K, np.array([xy[0] * z, xy[1] * z, z])) + rng.normal(0, 2.0, 2)
    values = {X(0): s, L(0): lm, C(0): ext}
    return ReprojectionFactor(X(0), L(0), "cam0", K, pixel, 1.0, extrinsic=C(0)), values


def imu_case(rng):
    si = _state(rng)
    pim = preintegrate(_batch(rng), ImuBias(si.bias.gyro + rng.normal(0, 0.005, 3), si.bias.accel + rng.normal(0, 0.02, 3)))
    sj = _state(rng)
    return ImuFactor(X(0), X(1), pim), {X(0): si, X(1): sj}


def dvl_case(rng):
    s = _state(rng)
    valid = tuple(bool(b) for b in rng.integers(0, 2, 3))
    if not any(valid):
        valid = (True, True, True)
    sample = DvlSample(0, tuple(rng.normal(0, 1, 3)), valid)
    f = DvlFactor(X(0), sample, random_pose(rng, 0.5), rng.normal(0, 0.3, 3), _offset(rng))
    return f, {X(0): s}


def depth_case(rng):
    s = _state(rng)
    return DepthFactor(X(0), DepthSample(0, float(rng.uniform(5, 30))), _offset(rng)), {X(0): s}


def prior_pose_case(rng):
    if rng.integers(2):
        return PriorPoseFactor(X(0), random_pose(rng)), {X(0): _state(rng)}
    return PriorPoseFactor(C(0), random_pose(rng)), {C(0): random_pose(rng)}


def prior_nav_case(rng):
    return PriorNavStateFactor(X(0), _state(rng)), {X(0): _state(rng)}


CASES = {
    "Reprojection": reprojection_case,
    "PreintegratedImu": imu_case,
    "DvlVelocity": dvl_case,
    "Depth": depth_case,
    "PriorPose": prior_pose_case,
    "PriorNavState": prior_nav_case,
}


def numerical_jacobians(factor, values, h=FD_STEP):
    out = []
    for key in factor.keys:
        n = DIMS[key.kind]
        J = np.zeros((len(factor.error_vector(values)), n))
        for k in range(n):
            d = np.zeros(n)
            d[k] = h
            plus = dict(values)
            minus = dict(values)
            plus[key] = retract(key.kind, values[key], d)
            minus[key] = retract(key.kind, values[key], -d)
            J[:, k] = (factor.error_vector(plus) - factor.error_vector(minus)) / (2 * h)
        out.append(J)
    return out


def relative_error(analytic, numeric) -> float:
    """Largest per-block ``|Ja - Jn|_F / max(|Jn|_F, 1)``."""
    worst = 0.0
    for Ja, Jn in zip(analytic, numeric):
        worst = max(worst, float(np.linalg.norm(Ja - Jn) / max(np.linalg.norm(Jn), 1.0)))
    return worst


def worst_case_error(kind: str, n: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, sum(map(ord, kind))])
    worst = 0.0
    for _ in range(n):
        f, values = CASES[kind](rng)
        worst = max(worst, relative_error(f.jacobians(values), numerical_jacobians(f, values)))
    return worst


"""Measurement factors with analytic Jacobians.

Residuals are ``measured - predicted``. Jacobians are taken with respect to the
tangent perturbations defined by :func:`uwslam.graph.core.retract`; nav-state
columns are ordered ``(dp, dtheta, dv, dbg, dba)``.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from ..exceptions import InvalidResidual
from ..geometry import CameraIntrinsics, Pose, Rotation, right_jacobian, right_jacobian_inv, skew, so3_exp_matrix
from ..sensors import (
    GRAVITY,
    DepthSample,
    DvlSample,
    ImuNoiseSpec,
    MotionOffset,
    NavState,
    PreintegratedImu,
)
from .core import Gaussian, Huber, Key, VariableKind

P, TH, V, BG, BA = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)

EXTRINSIC_PRIOR_SIGMAS = (0.05, 0.05, 0.05, math.radians(2.0), math.radians(2.0), math.radians(2.0))


class Factor:
    kind = "Factor"

    def __init__(self, keys, noise: Gaussian, loss: Huber | None = None):
        self.keys = tuple(keys)
        self.noise = noise
        self.loss = loss

    def error_vector(self, values) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, values) -> list[np.ndarray]:
        raise NotImplementedError

    def whitened_error(self, values) -> np.ndarray:
        return self.noise.whiten(self.error_vector(values))

    def cost(self, values) -> float:
        e = self.whitened_error(values)
        n = float(np.linalg.norm(e))
        if self.loss is None:
            return 0.5 * n * n
        return float(self.loss.cost(n))

    def evaluate(self, values):
        """Raw ``(residual, [J per key])``; subclasses may share work between the two."""
        return self.error_vector(values), self.jacobians(values)

    def linearize(self, values):
        """Whitened, robustified ``(residual, [J per key])``."""
        r, Js = self.evaluate(values)
        W = self.noise.sqrt_info
        e = W @ r
        Js = [W @ J for J in Js]
        if self.loss is not None:
            s = math.sqrt(float(self.loss.weight(np.linalg.norm(e))))
            e = s * e
            Js = [s * J for J in Js]
        return e, Js

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(repr, self.keys))})"


# ---------------------------------------------------------------- reprojection


def reprojection_batch(Ri, pi, Rc, tc, lm, intr, pixels, jacobians=True):
    """Vectorized reprojection residuals for N observations.

    ``intr`` is an ``(N, 6)`` array of ``fx, fy, cx, cy, k1, k2``. Returns
    ``(residual (N,2), valid (N,), J_nav_pose (N,2,6), J_landmark (N,2,3), J_extrinsic (N,2,6))``.
    """
    q = np.einsum("nji,nj->ni", Ri, lm - pi)  # landmark in the body frame
    pc = np.einsum("nji,nj->ni", Rc, q - tc)  # landmark in the camera frame
    z = pc[:, 2]
    valid = z > 1e-6
    zs = np.where(valid, z, 1.0)
    x = pc[:, 0] / zs
    y = pc[:, 1] / zs
    fx, fy, cx, cy, k1, k2 = intr.T
    r2 = x * x + y * y
    d = 1.0 + k1 * r2 + k2 * r2 * r2
    u = fx * x * d + cx
    v = fy * y * d + cy
    res = pixels - np.stack((u, v), axis=1)
    if not jacobians:
        return res, valid
    dd = 2.0 * (k1 + 2.0 * k2 * r2)  # d(d)/d(r2) * 2
    # d(u,v)/d(x,y)
    Dxy = np.empty((len(x), 2, 2))
    Dxy[:, 0, 0] = fx * (d + x * x * dd)
    Dxy[:, 0, 1] = fx * x * y * dd
    Dxy[:, 1, 0] = fy * x * y * dd
    Dxy[:, 1, 1] = fy * (d + y * y * dd)
    # d(x,y)/d(pc)
    Dp = np.zeros((len(x), 2, 3))
    Dp[:, 0, 0] = 1.0 / zs
    Dp[:, 1, 1] = 1.0 / zs
    Dp[:, 0, 2] = -x / zs
    Dp[:, 1, 2] = -y / zs
    Dpix = -np.einsum("nab,nbc->nac", Dxy, Dp)  # d(residual)/d(pc)
    RcT = np.transpose(Rc, (0, 2, 1))
    RiT = np.transpose(Ri, (0, 2, 1))
    A = np.einsum("nab,nbc->nac", Dpix, RcT)  # d(residual)/d(q)
    J_nav = np.empty((len(x), 2, 6))
    J_nav[:, :, 0:3] = -A
    J_nav[:, :, 3:6] = np.einsum("nab,nbc->nac", A, skew(q))
    J_l = np.einsum("nab,nbc->nac", A, RiT)
    J_c = np.empty((len(x), 2, 6))
    J_c[:, :, 0:3] = -Dpix
    J_c[:, :, 3:6] = np.einsum("nab,nbc->nac", Dpix, skew(pc))
    return res, valid, J_nav, J_l, J_c


@functools.lru_cache(maxsize=64)
def _pixel_noise(sigma: float) -> Gaussian:
    return Gaussian.from_sigmas([sigma, sigma])


def _intr_row(k: CameraIntrinsics):
    return (k.fx, k.fy, k.cx, k.cy, k.k1, k.k2)


class ReprojectionFactor(Factor):
    """Pixel observation of a landmark through camera ``C_p`` of the rig at nav state ``X_i``."""

    kind = "Reprojection"

    def __init__(
        self,
        nav_key: Key,
        landmark_key: Key,
        camera_id,
        intrinsics: CameraIntrinsics,
        pixel,
        sigma_px: float = 1.0,
        extrinsic: Key | Pose | None = None,
        loss: Huber | None = None,
    ):
        keys = [nav_key, landmark_key]
        if isinstance(extrinsic, Key):
            keys.append(extrinsic)
            self.extrinsic_pose = None
        else:
            self.extrinsic_pose = extrinsic if extrinsic is not None else Pose.identity()
        super().__init__(keys, _pixel_noise(float(sigma_px)), loss)
        self.camera_id = camera_id
        self.intrinsics = intrinsics
        self.pixel = np.asarray(pixel, dtype=float).reshape(2)
        self.sigma_px = float(sigma_px)
        self.intr_row = _intr_row(intrinsics)

    def extrinsic(self, values) -> Pose:
        if self.extrinsic_pose is not None:
            return self.extrinsic_pose
        return values[self.keys[2]]

    def _eval(self, values, jac):
        s = values[self.keys[0]]
        Cp = self.extrinsic(values)
        out = reprojection_batch(
            s.R[None],
            s.position[None],
            Cp.R[None],
            Cp.translation[None],
            np.asarray(values[self.keys[1]], dtype=float)[None],
            np.array([self.intr_row]),
            self.pixel[None],
            jacobians=jac,
        )
        if not out[1][0]:
            raise InvalidResidual("landmark behind camera")
        return out

    def error_vector(self, values):
        return self._eval(values, False)[0][0]

    def jacobians(self, values):
        _, _, J_nav, J_l, J_c = self._eval(values, True)
        Jn = np.zeros((2, 15))
        Jn[:, 0:6] = J_nav[0]
        Js = [Jn, J_l[0]]
        if self.extrinsic_pose is None:
            Js.append(J_c[0])
        return Js


def reprojection_residual(state: NavState, landmark, extrinsic: Pose, intrinsics: CameraIntrinsics, pixel):
    """Observed minus projected pixel of ``landmark`` seen through ``X_i * C_p``."""
    f = ReprojectionFactor(Key(VariableKind.NAV_STATE, 0), Key(VariableKind.LANDMARK, 0), None, intrinsics, pixel, extrinsic=extrinsic)
    return f.error_vector({f.keys[0]: state, f.keys[1]: np.asarray(landmark, dtype=float)})


# ---------------------------------------------------------------- inertial


class ImuFactor(Factor):
    """Preintegrated IMU constraint between two nav states plus the bias random walk."""

    kind = "PreintegratedImu"

    def __init__(self, key_i: Key, key_j: Key, delta: PreintegratedImu, noise_spec: ImuNoiseSpec | None = None, gravity=GRAVITY):
        noise_spec = noise_spec if noise_spec is not None else ImuNoiseSpec()
        cov = np.zeros((15, 15))
        cov[0:9, 0:9] = delta.covariance
        cov[9:15, 9:15] = noise_spec.bias_rw_covariance(delta.dt)
        try:
            noise = Gaussian.from_covariance(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("IMU factor covariance is not positive definite; check the noise spec") from exc
        super().__init__((key_i, key_j), noise)
        self.delta = delta
        self.gravity = np.asarray(gravity, dtype=float)

    def _terms(self, values):
        si: NavState = values[self.keys[0]]
        sj: NavState = values[self.keys[1]]
        d = self.delta
        g = self.gravity
        T = d.dt
        db = si.bias.vector - d.bias_linearization.vector
        J = d.bias_jacobian
        phi_b = J[0:3, 0:3] @ db[:3]
        dR = d.delta_R.matrix @ so3_exp_matrix(phi_b)
        dv = d.delta_v + J[3:6] @ db
        dp = d.delta_p + J[6:9] @ db
        Ri, Rj = si.R, sj.R
        r_R = Rotation.from_matrix(dR.T @ Ri.T @ Rj).log()
        u = Ri.T @ (sj.velocity - si.velocity - g * T)
        w = Ri.T @ (sj.position - si.position - si.velocity * T - 0.5 * g * T * T)
        r = np.concatenate((r_R, u - dv, w - dp, sj.bias.vector - si.bias.vector))
        return r, (si, sj, Ri, Rj, r_R, u, w, phi_b)

    def error_vector(self, values):
        return self._terms(values)[0]

    def jacobians(self, values):
        return self.evaluate(values)[1]

    def evaluate(self, values):
        r, (si, sj, Ri, Rj, r_R, u, w, phi_b) = self._terms(values)
        T = self.delta.dt
        Jb = self.delta.bias_jacobian
        Jri = right_jacobian_inv(r_R)
        Ji = np.zeros((15, 15))
        Jj = np.zeros((15, 15))
        # rotation block
        Ji[0:3, TH] = -Jri @ Rj.T @ Ri
        Jj[0:3, TH] = Jri
        Ji[0:3, BG] = -Jri @ so3_exp_matrix(r_R).T @ right_jacobian(phi_b) @ Jb[0:3, 0:3]
        # velocity block
        Ji[3:6, TH] = skew(u)
        Ji[3:6, V] = -Ri.T
        Jj[3:6, V] = Ri.T
        Ji[3:6, BG] = -Jb[3:6, 0:3]
        Ji[3:6, BA] = -Jb[3:6, 3:6]
        # position block
        Ji[6:9, P] = -np.eye(3)
        Jj[6:9, P] = Ri.T @ Rj
        Ji[6:9, TH] = skew(w)
        Ji[6:9, V] = -Ri.T * T
        Ji[6:9, BG] = -Jb[6:9, 0:3]
        Ji[6:9, BA] = -Jb[6:9, 3:6]
        # bias random walk
        Ji[9:15, 9:15] = -np.eye(6)
        Jj[9:15, 9:15] = np.eye(6)
        return r, [Ji, Jj]


class DvlFactor(Factor):
    """Body-frame velocity from the DVL, with lever arm and optional IMU time alignment."""

    kind = "DvlVelocity"

    def __init__(
        self,
        key: Key,
        sample: DvlSample,
        extrinsic: Pose | None = None,
        gyro=(0.0, 0.0, 0.0),
        offset: MotionOffset | None = None,
        sigma: float = 0.02,
        gravity=GRAVITY,
    ):
        self.mask = np.asarray(sample.valid, dtype=bool)
        if not self.mask.any():
            raise ValueError("DVL sample has no valid axis")
        super().__init__((key,), Gaussian.from_sigmas([sigma] * int(self.mask.sum())))
        self.sample = sample
        self.extrinsic = extrinsic if extrinsic is not None else Pose.identity()
        self.gyro = np.asarray(gyro, dtype=float)
        self.offset = offset if offset is not None else MotionOffset.zero()
        self.gravity = np.asarray(gravity, dtype=float)

    def _terms(self, values):
        s: NavState = values[self.keys[0]]
        o = self.offset
        Rd = self.extrinsic.R
        lever = self.extrinsic.translation
        omega = self.gyro - s.bias.gyro
        w = s.R.T @ (s.velocity + self.gravity * o.dt)
        u = o.delta_R.T @ (w + o.delta_v)
        pred = Rd.T @ (u + np.cross(omega, lever))
        r = np.asarray(self.sample.velocity, dtype=float) - pred
        return r, (s, w)

    def error_vector(self, values):
        return self._terms(values)[0][self.mask]

    def jacobians(self, values):
        _, (s, w) = self._terms(values)
        o = self.offset
        Rd = self.extrinsic.R
        J = np.zeros((3, 15))
        J[:, TH] = -Rd.T @ o.delta_R.T @ skew(w)
        J[:, V] = -Rd.T @ o.delta_R.T @ s.R.T
        J[:, BG] = -Rd.T @ skew(self.extrinsic.translation)
        return [J[self.mask]]


class DepthFactor(Factor):
    kind = "Depth"

    def __init__(self, key: Key, sample: DepthSample, offset: MotionOffset | None = None, sigma: float = 0.05, gravity=GRAVITY):
        super().__init__((key,), Gaussian.from_sigmas([sigma]))
        self.sample = sample
        self.offset = offset if offset is not None else MotionOffset.zero()
        self.gravity = np.asarray(gravity, dtype=float)

    def error_vector(self, values):
        s: NavState = values[self.keys[0]]
        o = self.offset
        p = s.position + s.velocity * o.dt + 0.5 * self.gravity * o.dt**2 + s.R @ o.delta_p
        return np.array([self.sample.depth - p[2]])

    def jacobians(self, values):
        s: NavState = values[self.keys[0]]
        o = self.offset
        J = np.zeros((1, 15))
        J[0, P] = -s.R[2]
        J[0, TH] = (s.R @ skew(o.delta_p))[2]
        J[0, 8] = -o.dt
        return [J]


# ---------------------------------------------------------------- priors


class PriorPoseFactor(Factor):
    """Prior on the pose part of a nav state or on a rig extrinsic; residual ``(linear, angular)``."""

    kind = "PriorPose"

    def __init__(self, key: Key, pose: Pose, noise: Gaussian | None = None, sigmas=None):
        if noise is None:
            noise = Gaussian.from_sigmas(sigmas if sigmas is not None else [1e-3] * 3 + [1e-3] * 3)
        super().__init__((key,), noise)
        self.pose = pose

    def _pose(self, values) -> Pose:
        v = values[self.keys[0]]
        return v.pose if isinstance(v, NavState) else v

    def error_vector(self, values):
        x = self._pose(values)
        R0 = self.pose.R
        return np.concatenate((R0.T @ (x.translation - self.pose.translation), Rotation.from_matrix(R0.T @ x.R).log()))

    def jacobians(self, values):
        x = self._pose(values)
        r = self.error_vector(values)
        n = 15 if self.keys[0].kind is VariableKind.NAV_STATE else 6
        J = np.zeros((6, n))
        J[0:3, 0:3] = self.pose.R.T @ x.R
        J[3:6, 3:6] = right_jacobian_inv(r[3:6])
        return [J]


class PriorNavStateFactor(Factor):
    kind = "PriorNavState"

    def __init__(self, key: Key, state: NavState, noise: Gaussian | None = None, sigmas=None):
        if noise is None:
            noise = Gaussian.from_sigmas(sigmas if sigmas is not None else [1e-3] * 15)
        super().__init__((key,), noise)
        self.state = state

    def error_vector(self, values):
        x: NavState = values[self.keys[0]]
        R0 = self.state.R
        return np.concatenate(
            (
                R0.T @ (x.position - self.state.position),
                Rotation.from_matrix(R0.T @ x.R).log(),
                x.velocity - self.state.velocity,
                x.bias.vector - self.state.bias.vector,
            )
        )

    def jacobians(self, values):
        x: NavState = values[self.keys[0]]
        r = self.error_vector(values)
        J = np.eye(15)
        J[0:3, 0:3] = self.state.R.T @ x.R
        J[3:6, 3:6] = right_jacobian_inv(r[3:6])
        return [J]


FACTOR_ARITY = {
    "Reprojection": (2, 3),
    "PreintegratedImu": (2, 2),
    "DvlVelocity": (1, 1),
    "Depth": (1, 1),
    "PriorPose": (1, 1),
    "PriorNavState": (1, 1),
}

"""IMU preintegration and the DVL / pressure-depth measurement models.

World frame is NED-like (z down) with gravity ``(0, 0, +9.81)``; accelerometers
report specific force ``R^T (a - g)`` in the body frame. All timestamps are
integer nanoseconds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import EmptyBatch, NonMonotonicTimestamps
from .geometry import Pose, Rotation, right_jacobian, right_jacobian_inv, skew, so3_exp_matrix

log = logging.getLogger(__name__)

GRAVITY = np.array([0.0, 0.0, 9.81])
NS = 1_000_000_000
DEFAULT_IMU_PERIOD_NS = 2_000_000  # 500 Hz
MAX_IMU_INTERVAL_NS = 20_000_000


class ImuSample(NamedTuple):
    t: int
    gyro: tuple  # rad/s, body frame
    accel: tuple  # specific force m/s^2, body frame

    kind = "imu"


class DvlSample(NamedTuple):
    t: int
    velocity: tuple  # m/s in the DVL frame
    valid: tuple = (True, True, True)

    kind = "dvl"


class DepthSample(NamedTuple):
    t: int
    depth: float  # m, positive down

    kind = "depth"


@dataclass(frozen=True)
class ImuBias:
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float).reshape(3))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.gyro, self.accel))

    @classmethod
    def from_vector(cls, b) -> ImuBias:
        return cls(b[:3], b[3:])


@dataclass(frozen=True)
class NavState:
    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias: ImuBias = field(default_factory=ImuBias)

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float).reshape(3)
        if not np.all(np.isfinite(v)):
            raise ValueError("velocity must be finite")
        object.__setattr__(self, "velocity", v)

    @property
    def R(self) -> np.ndarray:
        return self.pose.R

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    def with_pose(self, pose: Pose) -> NavState:
        return replace(self, pose=pose)


@dataclass(frozen=True)
class ImuNoiseSpec:
    """Continuous-time noise densities."""

    gyro_noise: float = math.radians(0.15) / 60.0  # rad/s/sqrt(Hz), 0.15 deg/sqrt(h)
    accel_noise: float = 0.05  # m/s^2/sqrt(Hz)
    gyro_bias_rw: float = 1e-5  # rad/s^2/sqrt(Hz)
    accel_bias_rw: float = 1e-4  # m/s^3/sqrt(Hz)

    def __post_init__(self):
        if min(self.gyro_noise, self.accel_noise, self.gyro_bias_rw, self.accel_bias_rw) < 0:
            raise ValueError("noise densities must be non-negative")

    def bias_rw_covariance(self, dt: float) -> np.ndarray:
        return np.diag([self.gyro_bias_rw**2 * dt] * 3 + [self.accel_bias_rw**2 * dt] * 3)


@dataclass(frozen=True)
class PreintegratedImu:
    delta_R: Rotation
    delta_v: np.ndarray
    delta_p: np.ndarray
    dt: float
    bias_linearization: ImuBias
    covariance: np.ndarray  # 9x9, (rotation, velocity, position)
    bias_jacobian: np.ndarray  # 9x6, rows (R, v, p), columns (gyro, accel)

    def corrected(self, bias: ImuBias):
        """First-order bias-corrected ``(dR matrix, dv, dp)`` for a new bias estimate."""
        db = bias.vector - self.bias_linearization.vector
        if not np.any(db):
            return self.delta_R.matrix, self.delta_v, self.delta_p
        J = self.bias_jacobian
        dR = self.delta_R.matrix @ so3_exp_matrix(J[0:3, 0:3] @ db[:3])
        dv = self.delta_v + J[3:6] @ db
        dp = self.delta_p + J[6:9] @ db
        return dR, dv, dp

    def compose(self, other: PreintegratedImu) -> PreintegratedImu:
        """Concatenate with a later contiguous batch (deltas only; covariance propagated approximately)."""
        Ra = self.delta_R.matrix
        dR = self.delta_R @ other.delta_R
        dv = self.delta_v + Ra @ other.delta_v
        dp = self.delta_p + self.delta_v * other.dt + Ra @ other.delta_p
        A = np.eye(9)
        A[0:3, 0:3] = other.delta_R.matrix.T
        A[3:6, 0:3] = -Ra @ skew(other.delta_v)
        A[6:9, 0:3] = -Ra @ skew(other.delta_p)
        A[6:9, 3:6] = np.eye(3) * other.dt
        B = np.zeros((9, 9))
        B[0:3, 0:3] = np.eye(3)
        B[3:6, 3:6] = Ra
        B[6:9, 6:9] = Ra
        cov = A @ self.covariance @ A.T + B @ other.covariance @ B.T
        return replace(self, delta_R=dR, delta_v=dv, delta_p=dp, dt=self.dt + other.dt, covariance=cov)


def preintegrate(
    samples: Sequence[ImuSample],
    bias: ImuBias | None = None,
    noise: ImuNoiseSpec | None = None,
    t_end: int | None = None,
) -> PreintegratedImu:
    """Summarize IMU samples into a relative-motion delta expressed in the first sample's frame.

    Each sample is held constant until the next one; the last sample is held
    until ``t_end`` (default: one previous interval, or 2 ms for a lone sample).
    """
    if len(samples) == 0:
        raise EmptyBatch("preintegration needs at least one IMU sample")
    bias = bias if bias is not None else ImuBias()
    noise = noise if noise is not None else ImuNoiseSpec()
    times = [int(s.t) for s in samples]
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise NonMonotonicTimestamps(f"IMU timestamps not strictly increasing ({a} -> {b})")
    if t_end is None:
        t_end = times[-1] + (times[-1] - times[-2] if len(times) > 1 else DEFAULT_IMU_PERIOD_NS)
    if t_end <= times[-1]:
        raise NonMonotonicTimestamps("t_end must be after the last sample")
    ends = times[1:] + [int(t_end)]

    bg, ba = bias.gyro, bias.accel
    gyro_var = noise.gyro_noise**2
    accel_var = noise.accel_noise**2
    dR = np.eye(3)
    dv = np.zeros(3)
    dp = np.zeros(3)
    cov = np.zeros((9, 9))
    J_R_bg = np.zeros((3, 3))
    J_v_bg = np.zeros((3, 3))
    J_v_ba = np.zeros((3, 3))
    J_p_bg = np.zeros((3, 3))
    J_p_ba = np.zeros((3, 3))
    A = np.eye(9)
    B = np.zeros((9, 6))
    steps = np.asarray(ends, dtype=np.int64) - np.asarray(times, dtype=np.int64)
    if steps.max() > MAX_IMU_INTERVAL_NS:
        log.warning("IMU interval of %.1f ms exceeds 20 ms", steps.max() / 1e6)
    dts = steps / NS
    W = np.array([s.gyro for s in samples], dtype=float).reshape(-1, 3) - bg
    Acc = np.array([s.accel for s in samples], dtype=float).reshape(-1, 3) - ba
    phis = W * dts[:, None]
    dRks = so3_exp_matrix(phis)
    Jrs = right_jacobian(phis)
    a_hats = skew(Acc)
    I3 = np.eye(3)
    for dt, a, dRk, Jr, a_hat in zip(dts, Acc, dRks, Jrs, a_hats):
        dR_a_hat = dR @ a_hat
        dt2 = dt * dt

        # covariance propagation uses the state before this step
        A[0:3, 0:3] = dRk.T
        A[3:6, 0:3] = -dR_a_hat * dt
        A[6:9, 0:3] = -0.5 * dR_a_hat * dt2
        A[6:9, 3:6] = I3 * dt
        B[0:3, 0:3] = Jr * dt
        B[3:6, 3:6] = dR * dt
        B[6:9, 3:6] = 0.5 * dR * dt2
        Bn = B * np.repeat((gyro_var / dt, accel_var / dt), 3)
        cov = A @ cov @ A.T + Bn @ B.T

        J_p_ba = J_p_ba + J_v_ba * dt - 0.5 * dR * dt2
        J_p_bg = J_p_bg + J_v_bg * dt - 0.5 * dR_a_hat @ J_R_bg * dt2
        J_v_ba = J_v_ba - dR * dt
        J_v_bg = J_v_bg - dR_a_hat @ J_R_bg * dt
        J_R_bg = dRk.T @ J_R_bg - Jr * dt

        Ra = dR @ a
        dp = dp + dv * dt + 0.5 * Ra * dt2
        dv = dv + Ra * dt
        dR = dR @ dRk

    bias_jac = np.zeros((9, 6))
    bias_jac[0:3, 0:3] = J_R_bg
    bias_jac[3:6, 0:3] = J_v_bg
    bias_jac[3:6, 3:6] = J_v_ba
    bias_jac[6:9, 0:3] = J_p_bg
    bias_jac[6:9, 3:6] = J_p_ba
    cov = 0.5 * (cov + cov.T)
    return PreintegratedImu(
        Rotation.from_matrix(dR), dv, dp, (t_end - times[0]) / NS, bias, cov, bias_jac
    )


def predict(state_i: NavState, delta: PreintegratedImu, gravity=GRAVITY) -> NavState:
    g = np.asarray(gravity, dtype=float)
    dR, dv, dp = delta.corrected(state_i.bias)
    Ri = state_i.R
    T = delta.dt
    R_j = Ri @ dR
    v_j = state_i.velocity + g * T + Ri @ dv
    p_j = state_i.position + state_i.velocity * T + 0.5 * g * T * T + Ri @ dp
    return NavState(Pose(Rotation.from_matrix(R_j), p_j), v_j, state_i.bias)


def imu_residual(
    state_i: NavState,
    state_j: NavState,
    delta: PreintegratedImu,
    gravity=GRAVITY,
    include_bias: bool = False,
) -> np.ndarray:
    """Residual ordered (rotation, velocity, position) [+ (gyro, accel) bias random walk]."""
    g = np.asarray(gravity, dtype=float)
    dR, dv, dp = delta.corrected(state_i.bias)
    Ri, Rj = state_i.R, state_j.R
    T = delta.dt
    r_R = Rotation.from_matrix(dR.T @ Ri.T @ Rj).log()
    r_v = Ri.T @ (state_j.velocity - state_i.velocity - g * T) - dv
    r_p = Ri.T @ (state_j.position - state_i.position - state_i.velocity * T - 0.5 * g * T * T) - dp
    r = np.concatenate((r_R, r_v, r_p))
    if include_bias:
        r = np.concatenate((r, state_j.bias.vector - state_i.bias.vector))
    return r


@dataclass(frozen=True)
class MotionOffset:
    """IMU-derived motion from a state's time to a measurement time (``dt`` may be negative)."""

    delta_R: np.ndarray
    delta_v: np.ndarray
    delta_p: np.ndarray
    dt: float

    @classmethod
    def zero(cls) -> MotionOffset:
        return cls(np.eye(3), np.zeros(3), np.zeros(3), 0.0)

    @classmethod
    def from_preintegrated(cls, pim: PreintegratedImu, backward: bool = False) -> MotionOffset:
        dR = pim.delta_R.matrix
        if not backward:
            return cls(dR, pim.delta_v, pim.delta_p, pim.dt)
        T = pim.dt
        return cls(dR.T, -dR.T @ pim.delta_v, dR.T @ (pim.delta_v * T - pim.delta_p), -T)


def imu_segment(samples: Sequence[ImuSample], t_from: int, t_to: int, times=None) -> list[ImuSample]:
    """Samples covering ``[t_from, t_to)`` with the sample active at ``t_from`` re-stamped to it.

    ``times`` may carry the sample timestamps precomputed as an int64 array.
    """
    if times is None:
        times = np.fromiter((s.t for s in samples), dtype=np.int64, count=len(samples))
    k0 = int(np.searchsorted(times, t_from, side="right")) - 1
    k1 = int(np.searchsorted(times, t_to, side="left"))
    if k0 < 0:
        k0 = 0
    seg = list(samples[k0:k1])
    if seg and seg[0].t != t_from:
        seg[0] = ImuSample(int(t_from), seg[0].gyro, seg[0].accel)
    return seg


def motion_offset(samples: Sequence[ImuSample], t_state: int, t_meas: int, bias: ImuBias | None = None, times=None) -> MotionOffset:
    """Motion between a state time and a measurement time from raw IMU samples."""
    if t_meas == t_state:
        return MotionOffset.zero()
    if t_meas > t_state:
        seg = imu_segment(samples, t_state, t_meas, times)
        if not seg:
            return MotionOffset.zero()
        return MotionOffset.from_preintegrated(preintegrate(seg, bias, t_end=t_meas))
    seg = imu_segment(samples, t_meas, t_state, times)
    if not seg:
        return MotionOffset.zero()
    return MotionOffset.from_preintegrated(preintegrate(seg, bias, t_end=t_state), backward=True)


def state_at_offset(state: NavState, offset: MotionOffset, gravity=GRAVITY):
    """(R, v, p) at the measurement time predicted from ``state``."""
    g = np.asarray(gravity, dtype=float)
    R = state.R
    T = offset.dt
    return (
        R @ offset.delta_R,
        state.velocity + g * T + R @ offset.delta_v,
        state.position + state.velocity * T + 0.5 * g * T * T + R @ offset.delta_p,
    )


def dvl_residual(
    state: NavState,
    sample: DvlSample,
    extrinsic: Pose | None = None,
    gyro=(0.0, 0.0, 0.0),
    offset: MotionOffset | None = None,
    gravity=GRAVITY,
) -> np.ndarray:
    """Measured minus predicted DVL-frame velocity; invalid axes are dropped.

    ``gyro`` is the raw gyro sample nearest the DVL time; the state's gyro bias is
    removed before computing the lever-arm velocity.
    """
    extrinsic = extrinsic if extrinsic is not None else Pose.identity()
    omega = np.asarray(gyro, dtype=float) - state.bias.gyro
    if offset is None:
        R, v = state.R, state.velocity
    else:
        R, v, _ = state_at_offset(state, offset, gravity)
    pred = extrinsic.R.T @ (R.T @ v + np.cross(omega, extrinsic.translation))
    r = np.asarray(sample.velocity, dtype=float) - pred
    return r[np.asarray(sample.valid, dtype=bool)]


def depth_residual(state: NavState, sample: DepthSample, offset: MotionOffset | None = None, gravity=GRAVITY) -> float:
    if offset is None:
        z = state.position[2]
    else:
        z = state_at_offset(state, offset, gravity)[2][2]
    return float(sample.depth - z)


__all__ = [
    "GRAVITY",
    "ImuSample",
    "DvlSample",
    "DepthSample",
    "ImuBias",
    "NavState",
    "ImuNoiseSpec",
    "PreintegratedImu",
    "MotionOffset",
    "preintegrate",
    "predict",
    "imu_residual",
    "imu_segment",
    "motion_offset",
    "state_at_offset",
    "dvl_residual",
    "depth_residual",
]

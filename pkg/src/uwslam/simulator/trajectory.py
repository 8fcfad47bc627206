"""Survey patterns and ground-truth trajectory generation.

Paths are smooth analytic curves in the horizontal plane with a depth profile.
Ground truth is generated on the IMU grid so that piecewise-constant IMU
samples reproduce it exactly: the velocity at every grid time equals the
analytic velocity, the body rate of each interval is the rotation increment
between neighbouring grid orientations, and positions follow by trapezoidal
integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..exceptions import InvalidSpec
from ..geometry import Pose, Rotation, so3_exp_matrix
from ..sensors import GRAVITY, NS, ImuBias, NavState

TWO_PI = 2.0 * math.pi


def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def _smootherstep_d(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x * x * (x - 1.0) ** 2, 0.0)


@dataclass(frozen=True)
class ConcentricCircles:
    """Circles around ``center``; with several radii the vehicle steps outward once per loop."""

    center: tuple = (0.0, 0.0)
    radii: tuple = (5.0,)
    depth_range: tuple = (10.0, 10.0)  # min/max vehicle depth, m
    depth_period: float = 60.0  # s, period of the depth oscillation

    def validate(self):
        if not self.radii or any(r <= 0 for r in self.radii):
            raise InvalidSpec("circle radii must be positive")
        if self.depth_period <= 0:
            raise InvalidSpec("depth_period must be positive")


@dataclass(frozen=True)
class Lawnmower:
    origin: tuple = (0.0, 0.0)
    extent: tuple = (20.0, 10.0)  # along-track length, cross-track width, m
    spacing: float = 2.5
    depth: float = 10.0

    def validate(self):
        if self.extent[0] <= 0 or self.extent[1] < 0 or self.spacing <= 0:
            raise InvalidSpec("lawnmower extent and spacing must be positive")

    def waypoints(self):
        n = int(math.floor(self.extent[1] / self.spacing + 1e-9)) + 1
        pts = []
        for k in range(n):
            y = self.origin[1] + k * self.spacing
            xs = (0.0, self.extent[0]) if k % 2 == 0 else (self.extent[0], 0.0)
            for x in xs:
                pts.append((self.origin[0] + x, y, self.depth))
        return pts


@dataclass(frozen=True)
class ReturnLoop:
    """Closed loop through ``waypoints`` ending back at the first one."""

    waypoints: tuple = ((0.0, 0.0, 10.0), (15.0, 0.0, 10.0), (15.0, 10.0, 10.0), (0.0, 10.0, 10.0))

    def validate(self):
        if len(self.waypoints) < 1:
            raise InvalidSpec("ReturnLoop needs at least one waypoint")


@dataclass(frozen=True)
class SurveySpec:
    pattern: object = field(default_factory=ConcentricCircles)
    speed: float = 0.5  # m/s
    duration: float = 60.0  # s
    seed: int = 0
    roll_pitch_sigma: float = 0.0  # rad; amplitude of smooth roll/pitch wobble
    imu_rate: float = 500.0

    def validate(self):
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise InvalidSpec("duration must be finite and non-negative")
        if self.duration == 0 and not self.single_pose:
            raise InvalidSpec("duration 0 is only allowed for a single-waypoint spec")
        if self.speed <= 0 and self.duration > 0:
            raise InvalidSpec("speed must be positive")
        if self.imu_rate <= 0:
            raise InvalidSpec("imu_rate must be positive")
        self.pattern.validate()

    @property
    def single_pose(self) -> bool:
        return isinstance(self.pattern, ReturnLoop) and len(self.pattern.waypoints) == 1


class Path:
    """Analytic position, velocity and yaw as functions of time (seconds)."""

    def position(self, t):
        raise NotImplementedError

    def velocity(self, t):
        raise NotImplementedError


class CirclePath(Path):
    def __init__(self, pattern: ConcentricCircles, speed: float):
        self.c = np.asarray(pattern.center, dtype=float)
        self.radii = np.asarray(pattern.radii, dtype=float)
        self.omega = speed / float(np.mean(self.radii))
        self.z0, self.z1 = pattern.depth_range
        self.zw = TWO_PI / pattern.depth_period

    def _radius(self, phi):
        # radius k holds for loop k; the step to k+1 is blended over the last quarter loop
        loops = phi / TWO_PI
        r = np.full_like(loops, self.radii[0])
        dr = np.zeros_like(loops)
        for k in range(len(self.radii) - 1):
            x = (loops - (k + 0.75)) / 0.25
            step = self.radii[k + 1] - self.radii[k]
            r = r + step * _smootherstep(x)
            dr = dr + step * _smootherstep_d(x) / (0.25 * TWO_PI)
        return r, dr

    def position(self, t):
        t = np.asarray(t, dtype=float)
        phi = self.omega * t
        r, _ = self._radius(phi)
        zm, za = 0.5 * (self.z0 + self.z1), 0.5 * (self.z1 - self.z0)
        return np.stack(
            (self.c[0] + r * np.cos(phi), self.c[1] + r * np.sin(phi), zm - za * np.cos(self.zw * t)), axis=-1
        )

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        phi = self.omega * t
        r, dr = self._radius(phi)
        w = self.omega
        za = 0.5 * (self.z1 - self.z0)
        return np.stack(
            (
                w * (dr * np.cos(phi) - r * np.sin(phi)),
                w * (dr * np.sin(phi) + r * np.cos(phi)),
                za * self.zw * np.sin(self.zw * t),
            ),
            axis=-1,
        )


class SplinePath(Path):
    """Natural cubic spline through waypoints, timed by chord length at constant nominal speed."""

    def __init__(self, waypoints, speed: float):
        pts = np.asarray(waypoints, dtype=float)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0):
            raise InvalidSpec("consecutive waypoints must be distinct")
        knots = np.concatenate(([0.0], np.cumsum(seg))) / speed
        self.t_end = float(knots[-1])
        self.spline = CubicSpline(knots, pts, bc_type="natural")
        self.dspline = self.spline.derivative()

    def position(self, t):
        return self.spline(np.clip(t, 0.0, self.t_end))

    def velocity(self, t):
        return self.dspline(np.clip(t, 0.0, self.t_end))


class StaticPath(Path):
    def __init__(self, point):
        self.p = np.asarray(point, dtype=float)

    def position(self, t):
        return np.broadcast_to(self.p, np.shape(t) + (3,)).copy()

    def velocity(self, t):
        return np.zeros(np.shape(t) + (3,))


def make_path(spec: SurveySpec) -> Path:
    pat = spec.pattern
    if isinstance(pat, ConcentricCircles):
        return CirclePath(pat, spec.speed)
    if isinstance(pat, Lawnmower):
        return SplinePath(pat.waypoints(), spec.speed)
    if isinstance(pat, ReturnLoop):
        if len(pat.waypoints) == 1:
            return StaticPath(pat.waypoints[0])
        return SplinePath(list(pat.waypoints) + [pat.waypoints[0]], spec.speed)
    raise InvalidSpec(f"unknown survey pattern {type(pat).__name__}")


@dataclass
class GroundTruth:
    """Nav states on the IMU grid plus the per-interval true body rate and acceleration."""

    times: np.ndarray  # int64 ns, length N+1
    rotations: np.ndarray  # (N+1, 3, 3)
    positions: np.ndarray  # (N+1, 3)
    velocities: np.ndarray  # (N+1, 3)
    omega: np.ndarray  # (N, 3) body rate held over [t_k, t_{k+1})
    accel: np.ndarray  # (N, 3) world acceleration held over [t_k, t_{k+1})
    gyro_bias: np.ndarray | None = None  # (N+1, 3)
    accel_bias: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> NavState:
        bias = ImuBias(
            self.gyro_bias[k] if self.gyro_bias is not None else np.zeros(3),
            self.accel_bias[k] if self.accel_bias is not None else np.zeros(3),
        )
        return NavState(Pose(Rotation.from_matrix(self.rotations[k]), self.positions[k]), self.velocities[k], bias)

    def interval(self, t_ns) -> np.ndarray:
        """Index of the grid interval holding each time (last index for the final instant)."""
        k = np.searchsorted(self.times, np.asarray(t_ns, dtype=np.int64), side="right") - 1
        return np.clip(k, 0, max(len(self.times) - 2, 0))

    def sample(self, t_ns):
        """(R, v, p) at arbitrary times, consistent with piecewise-constant rate and acceleration."""
        t_ns = np.atleast_1d(np.asarray(t_ns, dtype=np.int64))
        if len(self.times) == 1:
            n = len(t_ns)
            return (np.repeat(self.rotations, n, 0), np.repeat(self.velocities, n, 0), np.repeat(self.positions, n, 0))
        k = self.interval(t_ns)
        tau = ((t_ns - self.times[k]) / NS)[:, None]
        a = self.accel[k]
        R = self.rotations[k] @ so3_exp_matrix(self.omega[k] * tau)
        v = self.velocities[k] + a * tau
        p = self.positions[k] + self.velocities[k] * tau + 0.5 * a * tau * tau
        return R, v, p

    def state_at(self, t_ns: int) -> NavState:
        R, v, p = self.sample([t_ns])
        k = int(self.interval([t_ns])[0])
        bias = ImuBias(
            self.gyro_bias[k] if self.gyro_bias is not None else np.zeros(3),
            self.accel_bias[k] if self.accel_bias is not None else np.zeros(3),
        )
        return NavState(Pose(Rotation.from_matrix(R[0]), p[0]), v[0], bias)

    def trajectory(self, times_ns=None):
        from ..geometry import PoseTrajectory

        if times_ns is None:
            times_ns = self.times
        R, _, p = self.sample(times_ns)
        return PoseTrajectory(np.asarray(times_ns, dtype=np.int64), tuple(Pose(Rotation.from_matrix(r), x) for r, x in zip(R, p)))

    def specific_force(self, gravity=GRAVITY) -> np.ndarray:
        """Body-frame specific force of each interval."""
        return np.einsum("nji,nj->ni", self.rotations[:-1], self.accel - np.asarray(gravity))


def _yaw_rotations(vel, roll_pitch=None):
    yaw = np.unwrap(np.arctan2(vel[:, 1], vel[:, 0]))
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.zeros((len(yaw), 3, 3))
    R[:, 0, 0], R[:, 0, 1] = c, -s
    R[:, 1, 0], R[:, 1, 1] = s, c
    R[:, 2, 2] = 1.0
    if roll_pitch is not None:
        roll, pitch = roll_pitch
        cp, sp = np.cos(pitch), np.sin(pitch)
        cr, sr = np.cos(roll), np.sin(roll)
        Ry = np.zeros_like(R)
        Ry[:, 0, 0], Ry[:, 0, 2], Ry[:, 1, 1], Ry[:, 2, 0], Ry[:, 2, 2] = cp, sp, 1.0, -sp, cp
        Rx = np.zeros_like(R)
        Rx[:, 0, 0], Rx[:, 1, 1], Rx[:, 1, 2], Rx[:, 2, 1], Rx[:, 2, 2] = 1.0, cr, -sr, sr, cr
        R = R @ Ry @ Rx
    return R


def _rotation_log_batch(R):
    """Rotation vectors of a stack of rotation matrices (angles well below pi)."""
    cos = np.clip((np.trace(R, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    w = np.stack((R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]), axis=-1)
    small = theta < 1e-6
    k = np.where(small, 0.5 + theta * theta / 12.0, theta / (2.0 * np.sin(np.where(small, 1.0, theta))))
    return w * k[:, None]


def generate_trajectory(spec: SurveySpec) -> GroundTruth:
    """Ground truth on the IMU grid ``t_k = k / imu_rate`` for ``k = 0..N`` with ``N = duration * imu_rate``."""
    spec.validate()
    path = make_path(spec)
    N = int(round(spec.duration * spec.imu_rate))
    times = np.array([int(round(k * NS / spec.imu_rate)) for k in range(N + 1)], dtype=np.int64)
    ts = times / NS
    vel = np.asarray(path.velocity(ts), dtype=float).reshape(-1, 3)
    p0 = np.asarray(path.position(ts[:1]), dtype=float).reshape(-1, 3)[0]
    if N == 0:
        R = _yaw_rotations(np.array([[1.0, 0.0, 0.0]]))
        return GroundTruth(times, R, p0[None], np.zeros((1, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
    horiz = np.linalg.norm(vel[:, :2], axis=1)
    if np.any(horiz < 1e-9):
        raise InvalidSpec("horizontal speed vanishes along the path; heading is undefined")
    rp = None
    if spec.roll_pitch_sigma > 0:
        rng = np.random.default_rng([spec.seed, 11])
        f = rng.uniform(0.02, 0.1, 2)
        ph = rng.uniform(0, TWO_PI, 2)
        rp = (spec.roll_pitch_sigma * np.sin(TWO_PI * f[0] * ts + ph[0]), spec.roll_pitch_sigma * np.sin(TWO_PI * f[1] * ts + ph[1]))
    R = _yaw_rotations(vel, rp)
    dt = np.diff(ts)
    rel = np.einsum("nji,njk->nik", R[:-1], R[1:])
    omega = _rotation_log_batch(rel) / dt[:, None]
    accel = np.diff(vel, axis=0) / dt[:, None]
    pos = np.empty_like(vel)
    pos[0] = p0
    pos[1:] = p0 + np.cumsum(0.5 * (vel[:-1] + vel[1:]) * dt[:, None], axis=0)
    # re-derive rotations from the held rates so they chain exactly
    Rc = np.empty_like(R)
    Rc[0] = R[0]
    inc = so3_exp_matrix(omega * dt[:, None])
    for k in range(N):
        Rc[k + 1] = Rc[k] @ inc[k]
    return GroundTruth(times, Rc, pos, vel, omega, accel)


def loops_swept(gt: GroundTruth, center=(0.0, 0.0)) -> float:
    """Number of turns swept around ``center`` by the horizontal position."""
    d = gt.positions[:, :2] - np.asarray(center, dtype=float)
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    return float(abs(ang[-1] - ang[0]) / TWO_PI)

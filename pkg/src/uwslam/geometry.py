"""Lie-group primitives, the pinhole camera, and the generalized (ray) camera.

Conventions used everywhere in the package:

* quaternions are stored ``(qw, qx, qy, qz)`` (Hamilton), canonicalized to ``qw >= 0``;
* tangent vectors of SE(3) are ordered ``(linear, angular)``;
* the rig body frame is x-forward, y-right, z-down; camera frames are
  x-right, y-down, z along the optical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DegenerateGeometry,
    PixelOutOfBounds,
    PointBehindCamera,
    UnknownCamera,
)

SMALL_ANGLE = 1e-8
TRIANGULATION_MAX_COND = 1e8
UNDISTORT_ITERATIONS = 8


def skew(v):
    """3x3 cross-product matrix; also accepts a stack of vectors ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def so3_exp_matrix(phi):
    """Rodrigues' formula, batched over leading axes."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    W = skew(phi)
    W2 = W @ W
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(t)) / t**2)
    return np.eye(3) + a * W + b * W2


def right_jacobian(phi):
    """Right Jacobian of SO(3), batched over leading axes."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    W = skew(phi)
    W2 = W @ W
    small = theta < 1e-5
    t = np.where(small, 1.0, theta)
    a = np.where(small, 0.5, (1.0 - np.cos(t)) / t**2)
    b = np.where(small, 1.0 / 6.0, (t - np.sin(t)) / t**3)
    return np.eye(3) - a * W + b * W2


def right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    W = skew(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * W + W @ W / 12.0
    coeff = 1.0 / theta**2 - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) + 0.5 * W + coeff * W @ W


def _quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


class Rotation:
    """Unit quaternion rotation, immutable."""

    __slots__ = ("_q", "_matrix")

    def __init__(self, q=(1.0, 0.0, 0.0, 0.0)):
        q = np.array(q, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if not np.isfinite(n) or n == 0.0:
            raise ValueError(f"invalid quaternion {q}")
        q = q / n
        if q[0] < 0.0:
            q = -q
        q.setflags(write=False)
        self._q = q
        self._matrix = None

    @classmethod
    def identity(cls) -> Rotation:
        return cls()

    @classmethod
    def from_rotvec(cls, phi) -> Rotation:
        phi = np.asarray(phi, dtype=float).reshape(3)
        theta = float(np.linalg.norm(phi))
        if theta < SMALL_ANGLE:
            # sin(theta/2)/theta to second order
            k = 0.5 - theta**2 / 48.0
            return cls(np.concatenate(([math.cos(0.5 * theta)], k * phi)))
        return cls(np.concatenate(([math.cos(0.5 * theta)], math.sin(0.5 * theta) / theta * phi)))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> Rotation:
        axis = np.asarray(axis, dtype=float)
        return cls.from_rotvec(axis / np.linalg.norm(axis) * angle)

    @classmethod
    def from_matrix(cls, R) -> Rotation:
        R = np.asarray(R, dtype=float)
        tr = R[0, 0] + R[1, 1] + R[2, 2]
        if tr > 0.0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
            q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        elif R[1, 1] > R[2, 2]:
            s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
            q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        else:
            s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
            q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        return cls(q)

    @classmethod
    def from_ypr(cls, yaw: float, pitch: float = 0.0, roll: float = 0.0) -> Rotation:
        """Z-Y-X intrinsic Euler angles (yaw about z-down, then pitch, then roll)."""
        rz = cls.from_rotvec((0.0, 0.0, yaw))
        ry = cls.from_rotvec((0.0, pitch, 0.0))
        rx = cls.from_rotvec((roll, 0.0, 0.0))
        return rz @ ry @ rx

    @property
    def quaternion(self) -> np.ndarray:
        return self._q

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            w, x, y, z = self._q
            m = np.array(
                [
                    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
                ]
            )
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def inverse(self) -> Rotation:
        w, x, y, z = self._q
        return Rotation((w, -x, -y, -z))

    def __matmul__(self, other: Rotation) -> Rotation:
        if not isinstance(other, Rotation):
            return NotImplemented
        return Rotation(_quat_multiply(self._q, other._q))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T

    def log(self) -> np.ndarray:
        """Rotation vector on the principal branch, angle in ``[0, pi]``."""
        w = self._q[0]
        v = self._q[1:]
        n = float(np.linalg.norm(v))
        if n < SMALL_ANGLE:
            return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * v
        theta = 2.0 * math.atan2(n, w)
        return theta / n * v

    def angle(self) -> float:
        return 2.0 * math.atan2(float(np.linalg.norm(self._q[1:])), self._q[0])

    def __repr__(self):
        return "Rotation(q=[{:.9g}, {:.9g}, {:.9g}, {:.9g}])".format(*self._q)


def so3_log_matrix(R) -> np.ndarray:
    return Rotation.from_matrix(R).log()


class Pose:
    """Rigid transform mapping points from a local frame into a parent frame."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rotation | None = None, translation=(0.0, 0.0, 0.0)):
        self.rotation = rotation if rotation is not None else Rotation()
        t = np.array(translation, dtype=float).reshape(3)
        t.setflags(write=False)
        self.translation = t

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(Rotation.from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_rt(cls, R, t) -> Pose:
        return cls(Rotation.from_matrix(R), t)

    @property
    def R(self) -> np.ndarray:
        return self.rotation.matrix

    @property
    def t(self) -> np.ndarray:
        return self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> Pose:
        rinv = self.rotation.inverse()
        return Pose(rinv, -(rinv.matrix @ self.translation))

    def __matmul__(self, other: Pose) -> Pose:
        if not isinstance(other, Pose):
            return NotImplemented
        return Pose(self.rotation @ other.rotation, self.R @ other.translation + self.translation)

    compose = __matmul__

    def transform(self, points) -> np.ndarray:
        """Apply to one point ``(3,)`` or a stack ``(N, 3)``."""
        return np.asarray(points, dtype=float) @ self.R.T + self.translation

    def __repr__(self):
        return f"Pose(rotation={self.rotation!r}, translation={np.array2string(self.translation, precision=9)})"


@dataclass(frozen=True)
class Twist:
    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.angular))):
            raise ValueError("twist entries must be finite")

    @classmethod
    def from_vector(cls, xi) -> Twist:
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.linear, self.angular))


def _se3_V(omega):
    theta = float(np.linalg.norm(omega))
    W = skew(omega)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (
        np.eye(3)
        + (1.0 - math.cos(theta)) / theta**2 * W
        + (theta - math.sin(theta)) / theta**3 * W @ W
    )


def _se3_V_inv(omega):
    theta = float(np.linalg.norm(omega))
    W = skew(omega)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    coeff = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta**2
    return np.eye(3) - 0.5 * W + coeff * W @ W


def se3_exp(twist: Twist) -> Pose:
    if not isinstance(twist, Twist):
        twist = Twist.from_vector(twist)
    rot = Rotation.from_rotvec(twist.angular)
    return Pose(rot, _se3_V(twist.angular) @ twist.linear)


def se3_log(pose: Pose) -> Twist:
    omega = pose.rotation.log()
    return Twist(_se3_V_inv(omega) @ pose.translation, omega)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float, k1: float = 0.0, k2: float = 0.0):
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height, k1, k2)

    def contains(self, pixel) -> bool:
        u, v = pixel
        return 0.0 <= u < self.width and 0.0 <= v < self.height

    def distort(self, xy):
        xy = np.asarray(xy, dtype=float)
        r2 = np.sum(xy * xy, axis=-1, keepdims=True)
        return xy * (1.0 + self.k1 * r2 + self.k2 * r2 * r2)

    def undistort(self, xy_d):
        """Fixed-point inversion of the radial model; adequate for ``|k1| < 0.3``."""
        xy_d = np.asarray(xy_d, dtype=float)
        if self.k1 == 0.0 and self.k2 == 0.0:
            return xy_d.copy()
        xy = xy_d.copy()
        for _ in range(UNDISTORT_ITERATIONS):
            r2 = np.sum(xy * xy, axis=-1, keepdims=True)
            xy = xy_d / (1.0 + self.k1 * r2 + self.k2 * r2 * r2)
        return xy

    def normalized(self, pixel):
        """Undistorted normalized image coordinates of a pixel (or stack of pixels)."""
        pixel = np.asarray(pixel, dtype=float)
        xy_d = np.stack(
            ((pixel[..., 0] - self.cx) / self.fx, (pixel[..., 1] - self.cy) / self.fy), axis=-1
        )
        return self.undistort(xy_d)


def project(intrinsics: CameraIntrinsics, point_cam) -> np.ndarray:
    p = np.asarray(point_cam, dtype=float)
    if not p[2] > 1e-6:
        raise PointBehindCamera(f"point depth {p[2]:.3g} m is not in front of the camera")
    xy = intrinsics.distort(p[:2] / p[2])
    return np.array([intrinsics.fx * xy[0] + intrinsics.cx, intrinsics.fy * xy[1] + intrinsics.cy])


def camera_mount(tilt_deg: float = 0.0, yaw_deg: float = 0.0, translation=(0.0, 0.0, 0.0)) -> Pose:
    """Camera-to-body extrinsic for a camera pitched down by ``tilt_deg`` and yawed right by ``yaw_deg``.

    With zero tilt and yaw the optical axis is body +x (forward).
    """
    forward = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    tilt = Rotation.from_rotvec((0.0, -math.radians(tilt_deg), 0.0))
    yaw = Rotation.from_rotvec((0.0, 0.0, math.radians(yaw_deg)))
    return Pose(yaw @ tilt @ Rotation.from_matrix(forward), translation)


@dataclass(frozen=True)
class RigCamera:
    camera_id: str
    intrinsics: CameraIntrinsics
    extrinsic: Pose = field(default_factory=Pose.identity)  # camera -> rig body


@dataclass(frozen=True)
class RigCalibration:
    cameras: tuple

    def __post_init__(self):
        cams = tuple(self.cameras)
        object.__setattr__(self, "cameras", cams)
        if not cams:
            raise ValueError("a rig needs at least one camera")
        ids = [c.camera_id for c in cams]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate camera ids in {ids}")

    @property
    def camera_ids(self) -> list[str]:
        return [c.camera_id for c in self.cameras]

    def index(self, camera_id) -> int:
        for i, c in enumerate(self.cameras):
            if c.camera_id == camera_id:
                return i
        raise UnknownCamera(camera_id)

    def camera(self, camera_id) -> RigCamera:
        return self.cameras[self.index(camera_id)]

    def with_extrinsics(self, extrinsics: Sequence[Pose]) -> RigCalibration:
        return RigCalibration(
            tuple(RigCamera(c.camera_id, c.intrinsics, e) for c, e in zip(self.cameras, extrinsics))
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("ray direction must be non-zero")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "direction", d / n)

    def point_at(self, distance: float) -> np.ndarray:
        return self.origin + distance * self.direction

    def transformed(self, pose: Pose) -> Ray:
        return Ray(pose.transform(self.origin), pose.R @ self.direction)


def pixel_to_ray(rig: RigCalibration, camera_id, pixel) -> Ray:
    """Ray in the rig body frame through ``pixel`` of ``camera_id``."""
    cam = rig.camera(camera_id)
    if not cam.intrinsics.contains(pixel):
        raise PixelOutOfBounds(f"pixel {tuple(pixel)} outside {cam.intrinsics.width}x{cam.intrinsics.height}")
    x, y = cam.intrinsics.normalized(pixel)
    bearing = np.array([x, y, 1.0])
    return Ray(cam.extrinsic.translation, cam.extrinsic.R @ (bearing / np.linalg.norm(bearing)))


def triangulate(rays: Iterable[tuple[Ray, Pose]]) -> np.ndarray:
    """Least-squares point closest to a set of rays given in their rig frames."""
    A = np.zeros((3, 3))
    b = np.zeros(3)
    n = 0
    for ray, pose in rays:
        o = pose.transform(ray.origin)
        d = pose.R @ ray.direction
        P = np.eye(3) - np.outer(d, d)
        A += P
        b += P @ o
        n += 1
    if n < 2:
        raise DegenerateGeometry("triangulation needs at least two rays")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > TRIANGULATION_MAX_COND:
        raise DegenerateGeometry(f"rays are near-parallel (condition number {cond:.3g})")
    return np.linalg.solve(A, b)


@dataclass(frozen=True)
class PoseTrajectory:
    """Timestamped poses; ``times`` are integer nanoseconds."""

    times: np.ndarray
    poses: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64).reshape(-1)
        poses = tuple(self.poses)
        if len(times) != len(poses):
            raise ValueError("times and poses differ in length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)

    def __len__(self):
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, 3))
        return np.array([p.translation for p in self.poses])

    def transformed(self, T: Pose) -> PoseTrajectory:
        return PoseTrajectory(self.times, tuple(T @ p for p in self.poses))

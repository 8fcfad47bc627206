import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_pose, random_rotation
from uwslam.exceptions import DegenerateGeometry, PixelOutOfBounds, PointBehindCamera, UnknownCamera
from uwslam.geometry import (
    CameraIntrinsics,
    Pose,
    Ray,
    RigCalibration,
    RigCamera,
    Rotation,
    Twist,
    camera_mount,
    pixel_to_ray,
    project,
    se3_exp,
    se3_log,
    triangulate,
)

K = CameraIntrinsics(920.3, 920.3, 800.0, 600.0, 1600, 1200)
finite = st.floats(-3.0, 3.0, allow_nan=False)


def series_expm(A, terms=20):
    out = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def twist_hat(xi):
    v, w = xi[:3], xi[3:]
    A = np.zeros((4, 4))
    A[:3, :3] = [[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]
    A[:3, 3] = v
    return A


def single_cam_rig(extrinsic=None, k=K):
    return RigCalibration((RigCamera("cam0", k, extrinsic if extrinsic is not None else Pose.identity()),))


class TestExpLog:
    def test_zero_twist_is_identity(self):
        T = se3_exp(Twist(np.zeros(3), np.zeros(3)))
        assert np.allclose(T.matrix(), np.eye(4), atol=0)

    def test_pure_translation(self):
        T = se3_exp(Twist((1.0, 2.0, 3.0), np.zeros(3)))
        assert np.allclose(T.R, np.eye(3))
        assert np.allclose(T.t, (1, 2, 3))

    def test_quarter_yaw_matches_series(self):
        xi = np.array([0.0, 0.0, 0.0, 0.0, 0.0, math.pi / 2])
        assert np.max(np.abs(se3_exp(xi).matrix() - series_expm(twist_hat(xi)))) <= 1e-10

    def test_general_twist_matches_series(self, rng):
        for _ in range(50):
            xi = np.concatenate((rng.uniform(-2, 2, 3), rng.uniform(-1, 1, 3)))
            assert np.max(np.abs(se3_exp(xi).matrix() - series_expm(twist_hat(xi), 30))) <= 1e-10

    def test_log_identity(self):
        tw = se3_log(Pose.identity())
        assert np.all(tw.vector == 0)

    def test_log_pure_translation(self):
        tw = se3_log(Pose(translation=(4, 5, 6)))
        assert np.allclose(tw.linear, (4, 5, 6)) and np.allclose(tw.angular, 0)

    def test_round_trip_1000(self, rng):
        worst = 0.0
        for _ in range(1000):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            xi = np.concatenate((rng.uniform(-5, 5, 3), axis * rng.uniform(0, math.pi - 0.1)))
            worst = max(worst, np.max(np.abs(se3_log(se3_exp(xi)).vector - xi)))
        assert worst <= 1e-9

    def test_log_at_pi(self):
        R = Rotation.from_rotvec((0.0, 0.0, math.pi))
        assert math.isclose(np.linalg.norm(R.log()), math.pi, rel_tol=1e-12)

    @given(arrays(float, 6, elements=finite))
    def test_round_trip_property(self, xi):
        if np.linalg.norm(xi[3:]) > math.pi - 0.1:
            xi[3:] *= (math.pi - 0.1) / np.linalg.norm(xi[3:])
        assert np.allclose(se3_log(se3_exp(xi)).vector, xi, atol=1e-9)


class TestPoseAlgebra:
    def test_inverse_of_composition(self, rng):
        for _ in range(200):
            a, b = random_pose(rng), random_pose(rng)
            lhs = (a @ b).inverse().matrix()
            rhs = (b.inverse() @ a.inverse()).matrix()
            assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_compose_matches_matrices(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        assert np.allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)

    @pytest.mark.slow
    def test_quaternion_norm_over_million_compositions(self, rng):
        steps = [random_rotation(rng) for _ in range(64)]
        q = Rotation()
        worst = 0.0
        for k in range(1_000_000):
            q = q @ steps[k & 63]
            if k % 1000 == 0:
                worst = max(worst, abs(np.linalg.norm(q.quaternion) - 1.0))
        worst = max(worst, abs(np.linalg.norm(q.quaternion) - 1.0))
        assert worst <= 1e-9

    def test_canonical_hemisphere(self, rng):
        for _ in range(100):
            assert random_rotation(rng).quaternion[0] >= 0

    def test_matrix_round_trip(self, rng):
        for _ in range(100):
            R = random_rotation(rng)
            assert np.allclose(Rotation.from_matrix(R.matrix).quaternion, R.quaternion, atol=1e-12)


class TestProjection:
    def test_focal_from_fov(self):
        k = CameraIntrinsics.from_fov(1600, 1200, 82.0)
        assert k.fx == pytest.approx(920.3, abs=0.05)

    def test_on_axis(self):
        assert np.allclose(project(K, (0, 0, 2)), (800, 600))

    def test_off_axis(self):
        u, v = project(K, (0.5, 0, 2))
        assert abs(u - 1030.08) <= 0.01 and v == 600

    def test_behind(self):
        with pytest.raises(PointBehindCamera):
            project(K, (0, 0, -1))

    def test_principal_ray(self):
        ray = pixel_to_ray(single_cam_rig(), "cam0", (800, 600))
        assert np.allclose(ray.origin, 0) and np.allclose(ray.direction, (0, 0, 1))

    def test_unknown_camera_and_bounds(self):
        rig = single_cam_rig()
        with pytest.raises(UnknownCamera):
            pixel_to_ray(rig, "nope", (10, 10))
        with pytest.raises(PixelOutOfBounds):
            pixel_to_ray(rig, "cam0", (1600, 10))

    def test_tilted_extrinsic_direction(self):
        # 30 deg about the camera x axis, optical axis swings towards +y
        ext = Pose(Rotation.from_rotvec((-math.radians(30), 0, 0)))
        ray = pixel_to_ray(single_cam_rig(ext), "cam0", (800, 600))
        assert np.allclose(ray.direction, (0, math.sin(math.radians(30)), math.cos(math.radians(30))), atol=1e-12)

    @pytest.mark.parametrize("tilt", [0.0, 30.0, 45.0, 60.0])
    def test_mount_pitches_down_in_body(self, tilt):
        ray = pixel_to_ray(single_cam_rig(camera_mount(tilt)), "cam0", (800, 600))
        a = math.radians(tilt)
        assert np.allclose(ray.direction, (math.cos(a), 0, math.sin(a)), atol=1e-12)

    def test_round_trip_1000(self, rng):
        ext = random_pose(rng, 0.3)
        rig = single_cam_rig(ext)
        worst = 0.0
        for _ in range(1000):
            px = rng.uniform((0, 0), (1600, 1200))
            ray = pixel_to_ray(rig, "cam0", px)
            p_body = ray.point_at(rng.uniform(0.5, 20))
            worst = max(worst, np.max(np.abs(project(K, ext.inverse().transform(p_body)) - px)))
        assert worst <= 1e-6

    def test_round_trip_with_distortion(self, rng):
        k = CameraIntrinsics(920.3, 920.3, 800.0, 600.0, 1600, 1200, k1=-0.1, k2=0.02)
        rig = single_cam_rig(k=k)
        worst = 0.0
        for _ in range(500):
            px = rng.uniform((100, 100), (1500, 1100))
            p = pixel_to_ray(rig, "cam0", px).point_at(3.0)
            worst = max(worst, np.max(np.abs(project(k, p) - px)))
        assert worst <= 1e-3


class TestTriangulation:
    def test_exact_intersection(self):
        target = np.array([0, 0, 5.0])
        rays = [(Ray((x, 0, 0), target - (x, 0, 0)), Pose.identity()) for x in (-0.1, 0.1)]
        assert np.max(np.abs(triangulate(rays) - target)) <= 1e-9

    def test_parallel_rays(self):
        rays = [(Ray((x, 0, 0), (0, 0, 1)), Pose.identity()) for x in (-0.1, 0.1)]
        with pytest.raises(DegenerateGeometry):
            triangulate(rays)

    def test_single_ray(self):
        with pytest.raises(DegenerateGeometry):
            triangulate([(Ray((0, 0, 0), (0, 0, 1)), Pose.identity())])

    def test_noisy_rays_match_dense_oracle(self, rng):
        target = np.array([1.0, -0.5, 6.0])
        rays = []
        for _ in range(5):
            pose = random_pose(rng, 1.0, 0.3)
            o_world = pose.t + rng.uniform(-0.2, 0.2, 3)
            d_world = target - o_world
            d_world = Rotation.from_rotvec(rng.normal(size=3) * math.radians(0.2) / math.sqrt(3)).apply(d_world)
            inv = pose.inverse()
            rays.append((Ray(inv.transform(o_world), inv.R @ d_world), pose))
        # oracle: stack I - dd^T rows and solve with lstsq
        A, b = [], []
        for ray, pose in rays:
            o, d = pose.transform(ray.origin), pose.R @ ray.direction
            P = np.eye(3) - np.outer(d, d)
            A.append(P)
            b.append(P @ o)
        oracle = np.linalg.lstsq(np.vstack(A), np.concatenate(b), rcond=None)[0]
        assert np.max(np.abs(triangulate(rays) - oracle)) <= 1e-9

    def test_common_transform(self, rng):
        target = np.array([0.3, 0.2, 4.0])
        rays = []
        for x in (-0.5, 0.0, 0.5):
            pose = Pose(translation=(x, 0.1 * x, 0))
            rays.append((Ray((0, 0, 0), target - pose.t + rng.normal(0, 0.01, 3)), pose))
        p0 = triangulate(rays)
        for _ in range(20):
            T = random_pose(rng)
            moved = [(ray, T @ pose) for ray, pose in rays]
            assert np.max(np.abs(triangulate(moved) - T.transform(p0))) <= 1e-8

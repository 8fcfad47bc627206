"""Estimator-style wrappers (fit / predict / transform, get_params) over the core modules."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_calibration, check_log, check_positive, check_trajectory
from .evaluation import align
from .geometry import Pose, PoseTrajectory, Rotation
from .graph import C, SolverOptions
from .graph.builder import BuildConfig
from .pipeline import run_solve
from .semantics import LabeledPointCloud, fuse, project_labels


class MultiSensorSLAM(BaseEstimator):
    """Factor-graph smoother over vision, IMU, DVL and depth measurements.

    ``fit`` takes a sensor log and the rig calibration; afterwards
    ``trajectory_`` holds the keyframe poses and ``landmarks_`` the
    optimized sparse map.
    """

    def __init__(
        self,
        vision=True,
        imu=True,
        dvl=True,
        depth=True,
        keyframe_rate=10.0,
        pixel_sigma=1.0,
        huber_delta=1.345,
        optimize_extrinsics=False,
        lambda0=1e-4,
        max_iterations=100,
    ):
        self.vision = vision
        self.imu = imu
        self.dvl = dvl
        self.depth = depth
        self.keyframe_rate = keyframe_rate
        self.pixel_sigma = pixel_sigma
        self.huber_delta = huber_delta
        self.optimize_extrinsics = optimize_extrinsics
        self.lambda0 = lambda0
        self.max_iterations = max_iterations

    def build_config(self) -> BuildConfig:
        cfg = BuildConfig(
            keyframe_rate=check_positive(self.keyframe_rate, "keyframe_rate"),
            vision=bool(self.vision),
            imu=bool(self.imu),
            dvl=bool(self.dvl),
            depth=bool(self.depth),
            pixel_sigma=check_positive(self.pixel_sigma, "pixel_sigma"),
            huber_delta=self.huber_delta,
            optimize_extrinsics=self.optimize_extrinsics,
        )
        cfg.validate()
        return cfg

    def solver_options(self) -> SolverOptions:
        return SolverOptions(lambda0=check_positive(self.lambda0, "lambda0"), max_iterations=int(self.max_iterations))

    def fit(self, log, calibration, initial_states=None, initial_landmarks=None):
        result = run_solve(
            check_log(log), check_calibration(calibration), self.build_config(), self.solver_options(), initial_states, initial_landmarks
        )
        self.result_ = result
        self.trajectory_ = result.trajectory
        self.landmark_ids_ = result.landmark_ids
        self.landmarks_ = result.landmarks
        self.report_ = result.report
        self.extrinsics_ = {
            cam.camera_id: result.problem.graph.values[C(p)] for p, cam in enumerate(result.problem.graph.rig.cameras)
        }
        return self

    def predict(self, times) -> PoseTrajectory:
        """Poses at ``times`` (ns): linear in position, geodesic in rotation between keyframes."""
        check_is_fitted(self, "trajectory_")
        return interpolate(self.trajectory_, times)

    def score(self, reference: PoseTrajectory) -> float:
        """Negative rigid-alignment ATE against ``reference``, so larger is better."""
        check_is_fitted(self, "trajectory_")
        return -align(self.trajectory_, check_trajectory(reference, "reference")).ate_rmse


def interpolate(traj: PoseTrajectory, times) -> PoseTrajectory:
    times = np.asarray(times, dtype=np.int64).reshape(-1)
    if len(traj) == 0:
        raise ValueError("cannot interpolate an empty trajectory")
    k = np.clip(np.searchsorted(traj.times, times, side="right") - 1, 0, len(traj) - 1)
    poses = []
    for t, i in zip(times, k):
        a = traj.poses[i]
        if i + 1 >= len(traj) or t <= traj.times[i]:
            poses.append(a)
            continue
        b = traj.poses[i + 1]
        s = (t - traj.times[i]) / (traj.times[i + 1] - traj.times[i])
        dR = Rotation.from_rotvec(s * (a.rotation.inverse() @ b.rotation).log())
        poses.append(Pose(a.rotation @ dR, (1 - s) * a.translation + s * b.translation))
    return PoseTrajectory(times, tuple(poses))


class TrajectoryAligner(BaseEstimator):
    """Closed-form rigid or similarity alignment of an estimate onto a reference."""

    def __init__(self, mode="rigid", tolerance_ns=10_000_000):
        self.mode = mode
        self.tolerance_ns = tolerance_ns

    def fit(self, estimate, reference):
        res = align(check_trajectory(estimate, "estimate"), check_trajectory(reference, "reference"), self.mode, int(self.tolerance_ns))
        self.alignment_ = res
        self.transform_ = res.transform
        self.scale_ = res.scale
        self.ate_ = res.ate_rmse
        return self

    def transform(self, trajectory) -> PoseTrajectory:
        check_is_fitted(self, "transform_")
        traj = check_trajectory(trajectory)
        T, s = self.transform_, self.scale_
        poses = tuple(Pose(T.rotation @ p.rotation, s * (T.R @ p.translation) + T.translation) for p in traj.poses)
        return PoseTrajectory(traj.times, poses)

    def fit_transform(self, estimate, reference) -> PoseTrajectory:
        return self.fit(estimate, reference).transform(estimate)


class SemanticCloudFuser(BaseEstimator):
    """Back-projects labeled depth frames and fuses them on a voxel grid.

    Frames are ``(camera_pose, intrinsics, depth, labels)`` tuples where
    ``camera_pose`` maps camera coordinates to the world.
    """

    def __init__(self, voxel=0.05, stride=4):
        self.voxel = voxel
        self.stride = stride

    def _project(self, frames):
        return [project_labels(pose, k, d, lab, int(self.stride)) for pose, k, d, lab in frames]

    def fit(self, frames):
        check_positive(self.voxel, "voxel")
        self.cloud_ = fuse(self._project(frames), self.voxel)
        return self

    def transform(self, frames) -> LabeledPointCloud:
        """Fuse further frames into the fitted cloud and return the result."""
        check_is_fitted(self, "cloud_")
        return fuse([self.cloud_, *self._project(frames)], self.voxel)

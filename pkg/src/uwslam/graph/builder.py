"""Build a factor graph from a sensor log and a rig calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DegenerateGeometry, PixelOutOfBounds
from ..geometry import Pose, PoseTrajectory, Rotation, pixel_to_ray, triangulate
from ..io.associate import DEFAULT_TOLERANCE_NS, Association, associate
from ..io.calibration import CalibrationFile
from ..io.log import SensorLog
from ..sensors import GRAVITY, NS, ImuBias, ImuNoiseSpec, ImuSample, NavState, motion_offset, predict, preintegrate
from .core import FactorGraph, Huber, L, X, C
from .factors import DepthFactor, DvlFactor, ImuFactor, ReprojectionFactor
from .solver import optimize_extrinsics_toggle

log = logging.getLogger(__name__)

SENSORS = ("vision", "imu", "dvl", "depth")


@dataclass
class BuildConfig:
    keyframe_rate: float = 10.0
    vision: bool = True
    imu: bool = True
    dvl: bool = True
    depth: bool = True
    pixel_sigma: float = 1.0
    huber_delta: float | None = 1.345
    imu_noise: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)
    dvl_sigma: float = 0.02
    depth_sigma: float = 0.05
    tolerance_ns: int = DEFAULT_TOLERANCE_NS
    optimize_extrinsics: object = False  # flag, or one flag per camera
    min_observations: int = 2

    def enabled(self) -> dict:
        return {s: bool(getattr(self, s)) for s in SENSORS}

    def validate(self):
        if not any(self.enabled().values()):
            raise ValueError("at least one sensor must be enabled")
        if self.keyframe_rate <= 0:
            raise ValueError("keyframe_rate must be positive")


@dataclass
class BuiltProblem:
    graph: FactorGraph
    times: np.ndarray  # keyframe times, ns
    association: Association
    info: dict

    def trajectory(self, values=None) -> PoseTrajectory:
        values = self.graph.values if values is None else values
        return PoseTrajectory(self.times, tuple(values[X(i)].pose for i in range(len(self.times))))

    def states(self, values=None) -> list[NavState]:
        values = self.graph.values if values is None else values
        return [values[X(i)] for i in range(len(self.times))]

    def landmarks(self, values=None) -> dict[int, np.ndarray]:
        values = self.graph.values if values is None else values
        return {k.index: np.asarray(v) for k, v in values.items() if k.kind.value == "Landmark"}


def initial_state_from_meta(meta: dict) -> tuple[int, NavState]:
    s = meta.get("initial_state")
    if s is None:
        return 0, NavState(Pose.identity())
    pose = Pose(Rotation(s.get("quaternion", (1.0, 0.0, 0.0, 0.0))), s.get("position", (0.0, 0.0, 0.0)))
    bias = ImuBias(s.get("gyro_bias", (0.0, 0.0, 0.0)), s.get("accel_bias", (0.0, 0.0, 0.0)))
    return int(s.get("t", 0)), NavState(pose, s.get("velocity", (0.0, 0.0, 0.0)), bias)


def keyframe_times(log: SensorLog, rate: float) -> np.ndarray:
    t0, _ = initial_state_from_meta(log.meta)
    if "duration_ns" in log.meta:
        t_end = int(log.meta["duration_ns"])
    else:
        t_end = (max(r.t for r in log.records) + 1) if log.records else t0 + 1
    period = int(round(NS / rate))
    n = max((t_end - t0 + period - 1) // period, 1)
    return t0 + period * np.arange(n, dtype=np.int64)


def _active_sample(samples, times_arr, t):
    k = int(np.searchsorted(times_arr, t, side="right")) - 1
    return samples[max(k, 0)] if samples else None


def _batch_for(assoc: Association, i: int) -> list[ImuSample]:
    batch = list(assoc.imu_batches[i])
    t0 = int(assoc.state_times[i])
    if batch and batch[0].t != t0:
        # no sample at or before the state time: hold the first one backwards
        batch[0] = ImuSample(t0, batch[0].gyro, batch[0].accel)
    return batch


def dead_reckon(log: SensorLog, times, assoc: Association, config: BuildConfig, gravity, dvl_extrinsic: Pose | None = None) -> list[NavState]:
    """Front-end surrogate: IMU prediction with DVL velocity and depth resets where available."""
    _, s0 = initial_state_from_meta(log.meta)
    R_dvl = dvl_extrinsic.R if dvl_extrinsic is not None else np.eye(3)
    dvl_at = {i: s for i, s in assoc.dvl}
    depth_at = {i: s for i, s in assoc.depth}
    states = [s0]
    for i in range(1, len(times)):
        prev = states[-1]
        batch = _batch_for(assoc, i - 1) if assoc.imu_batches else []
        dt = (int(times[i]) - int(times[i - 1])) / NS
        if batch:
            s = predict(prev, preintegrate(batch, prev.bias, config.imu_noise, t_end=int(times[i])), gravity)
        else:
            s = NavState(Pose(prev.pose.rotation, prev.position + prev.velocity * dt), prev.velocity, prev.bias)
        v, p = s.velocity, s.position.copy()
        if config.dvl and i in dvl_at:
            d = dvl_at[i]
            mask = np.asarray(d.valid, dtype=bool)
            if mask.all():
                v = s.R @ (R_dvl @ np.asarray(d.velocity, dtype=float))
        if config.depth and i in depth_at:
            p[2] = depth_at[i].depth
        states.append(NavState(Pose(s.pose.rotation, p), v, s.bias))
    return states


def build_graph(
    log: SensorLog,
    calibration: CalibrationFile,
    config: BuildConfig | None = None,
    initial_states: list[NavState] | None = None,
    initial_landmarks: dict | None = None,
) -> BuiltProblem:
    """Keyframes at ``config.keyframe_rate`` from the log start, one nav state each.

    The first state is frozen at the log's initial state to fix the gauge.
    ``initial_states`` / ``initial_landmarks`` override the built-in
    initialization (dead reckoning and triangulation).
    """
    config = config if config is not None else BuildConfig()
    config.validate()
    gravity = np.asarray(log.meta.get("gravity", GRAVITY), dtype=float)
    rig = calibration.rig
    times = keyframe_times(log, config.keyframe_rate)
    assoc = associate(log.records, times, config.tolerance_ns)
    imu_samples = assoc.imu_samples
    imu_t = np.fromiter((s.t for s in imu_samples), dtype=np.int64, count=len(imu_samples))

    if initial_states is None:
        states = dead_reckon(log, times, assoc, config, gravity, calibration.dvl_extrinsic)
    else:
        states = list(initial_states)
        if len(states) != len(times):
            raise ValueError(f"expected {len(times)} initial states, got {len(states)}")
    graph = FactorGraph(rig, gravity)
    for i, s in enumerate(states):
        graph.add_variable(X(i), s)
    graph.freeze(X(0))
    graph.add_extrinsics(rig)
    info = {"keyframes": len(times), "association": dict(assoc.report)}
    touched_velocity = np.zeros(len(times), dtype=bool)
    touched_velocity[0] = True

    if config.imu:
        skipped = 0
        for i in range(len(times) - 1):
            batch = _batch_for(assoc, i)
            if not batch:
                skipped += 1
                continue
            pim = preintegrate(batch, states[i].bias, config.imu_noise, t_end=int(times[i + 1]))
            graph.add_factor(ImuFactor(X(i), X(i + 1), pim, config.imu_noise, gravity))
            touched_velocity[i] = touched_velocity[i + 1] = True
        info["imu_intervals_without_samples"] = skipped

    def offset_for(i, t):
        if not config.imu or not imu_samples:
            return None
        return motion_offset(imu_samples, int(times[i]), int(t), states[i].bias, imu_t)

    if config.dvl:
        for i, d in assoc.dvl:
            if not np.any(d.valid):
                continue
            g = _active_sample(imu_samples, imu_t, d.t)
            gyro = g.gyro if g is not None else (0.0, 0.0, 0.0)
            graph.add_factor(DvlFactor(X(i), d, calibration.dvl_extrinsic, gyro, offset_for(i, d.t), config.dvl_sigma, gravity))
            touched_velocity[i] = True
    if config.depth:
        for i, d in assoc.depth:
            graph.add_factor(DepthFactor(X(i), d, offset_for(i, d.t), config.depth_sigma, gravity))

    n_landmarks = 0
    dropped = 0
    if config.vision:
        tracks: dict[int, list] = {}
        for i in sorted(assoc.camera):
            for rec in assoc.camera[i]:
                for tid, u, v in rec.observations:
                    tracks.setdefault(int(tid), []).append((i, rec.camera_id, (u, v)))
        loss = Huber(config.huber_delta) if config.huber_delta else None
        cam_index = {c.camera_id: p for p, c in enumerate(rig.cameras)}
        for tid in sorted(tracks):
            obs = tracks[tid]
            if len(obs) < config.min_observations:
                dropped += 1
                continue
            if initial_landmarks is not None and tid in initial_landmarks:
                point = np.asarray(initial_landmarks[tid], dtype=float)
            else:
                try:
                    rays = [(pixel_to_ray(rig, cid, px), states[i].pose) for i, cid, px in obs]
                    point = triangulate(rays)
                except (DegenerateGeometry, PixelOutOfBounds):
                    dropped += 1
                    continue
                if not _in_front(point, obs, states, rig, cam_index):
                    dropped += 1
                    continue
            graph.add_variable(L(tid), point)
            n_landmarks += 1
            for i, cid, px in obs:
                p = cam_index[cid]
                graph.add_factor(
                    ReprojectionFactor(X(i), L(tid), cid, rig.cameras[p].intrinsics, px, config.pixel_sigma, extrinsic=C(p), loss=loss)
                )
    info["landmarks"] = n_landmarks
    info["tracks_dropped"] = dropped

    if not config.imu:
        for i in range(1, len(times)):
            graph.freeze(X(i), range(9, 15))
    for i in np.flatnonzero(~touched_velocity):
        graph.freeze(X(int(i)), range(6, 9))
    optimize_extrinsics_toggle(graph, config.optimize_extrinsics)
    info["factor_census"] = graph.factor_census()
    return BuiltProblem(graph, times, assoc, info)


def _in_front(point, obs, states, rig, cam_index) -> bool:
    for i, cid, _ in obs:
        T = states[i].pose @ rig.cameras[cam_index[cid]].extrinsic
        if T.inverse().transform(point)[2] <= 1e-3:
            return False
    return True

"""Synthesize multi-sensor logs from a ground-truth trajectory and a landmark world."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidRates, InvalidSpec
from ..io.calibration import CalibrationFile
from ..io.log import CameraRecord, SensorLog
from ..sensors import GRAVITY, NS, DepthSample, DvlSample, ImuNoiseSpec, ImuSample
from .trajectory import GroundTruth
from .world import LandmarkWorld

FRESH_ID_BASE = 1_000_000
DEFAULT_MAX_RANGE = 8.0

# independent random streams, keyed by purpose
_STREAM_IMU, _STREAM_DVL, _STREAM_DEPTH, _STREAM_CAMERA, _STREAM_REASSOC, _STREAM_JITTER = 2, 3, 4, 5, 6, 7


@dataclass(frozen=True)
class SensorRates:
    imu: float = 500.0
    camera: float = 30.0
    dvl: float = 7.0
    depth: float = 10.0

    def validate(self):
        for name in ("imu", "camera", "dvl", "depth"):
            r = getattr(self, name)
            if not (r > 0 and math.isfinite(r)):
                raise InvalidRates(f"{name} rate must be positive, got {r}")


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 1.0
    imu: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)
    dvl_sigma: float = 0.02
    depth_sigma: float = 0.05
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def noiseless(cls) -> NoiseConfig:
        return cls(0.0, ImuNoiseSpec(0.0, 0.0, 0.0, 0.0), 0.0, 0.0)


@dataclass(frozen=True)
class DegradationSchedule:
    """Camera blackouts ``(t_start, t_end)`` in seconds with a recognition probability each."""

    blackouts: tuple = ()
    recognition: tuple = ()

    def validate(self, duration: float):
        if len(self.recognition) not in (0, len(self.blackouts)):
            raise InvalidSpec("give one recognition probability per blackout")
        prev = -math.inf
        for (a, b), p in zip(self.blackouts, self.probabilities()):
            if not (0 <= a < b <= duration):
                raise InvalidSpec(f"blackout ({a}, {b}) outside [0, {duration}]")
            if a < prev:
                raise InvalidSpec("blackouts must be sorted and non-overlapping")
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec("recognition probability must be in [0, 1]")
            prev = b

    def probabilities(self) -> tuple:
        return tuple(self.recognition) if self.recognition else (1.0,) * len(self.blackouts)

    def in_blackout(self, t_ns) -> np.ndarray:
        t = np.asarray(t_ns, dtype=np.int64)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.blackouts:
            out |= (t >= int(round(a * NS))) & (t < int(round(b * NS)))
        return out


@dataclass
class SimOutput:
    ground_truth: GroundTruth
    log: SensorLog
    world: LandmarkWorld
    calibration: CalibrationFile
    reassociation: list  # [(segment start ns, {emitted id: true id})]
    schedule: DegradationSchedule = field(default_factory=DegradationSchedule)


def sample_times(duration: float, rate: float) -> np.ndarray:
    """Exactly periodic times ``round(n / rate)`` ns for ``n / rate < duration``."""
    n = int(math.ceil(duration * rate - 1e-9))
    return np.array([int(round(k * NS / rate)) for k in range(max(n, 0))], dtype=np.int64)


def _jitter(times: np.ndarray, sigma_ns: float, rng, t_max: int) -> np.ndarray:
    if sigma_ns <= 0 or len(times) == 0:
        return times
    t = times + np.round(rng.normal(0.0, sigma_ns, len(times))).astype(np.int64)
    return np.sort(np.clip(t, 0, t_max))


def draw_reassociation(seen_ids, p: float, blackout_index: int, seed: int, current: dict) -> dict:
    """Decide, per re-observed landmark, whether it keeps its current track id.

    Returns the updated ``true id -> emitted id`` map; lost landmarks get
    ``(blackout_index + 1) * FRESH_ID_BASE + true id``.
    """
    rng = np.random.default_rng([int(seed), _STREAM_REASSOC, int(blackout_index)])
    out = dict(current)
    for lid in sorted(int(i) for i in seen_ids):
        keep = rng.random() < p
        if not keep:
            out[lid] = (blackout_index + 1) * FRESH_ID_BASE + lid
    return out


def _visible(R_wc, t_wc, points, intr, max_range):
    pc = (points - t_wc) @ R_wc
    z = pc[:, 2]
    rng_ok = np.linalg.norm(pc, axis=1) <= max_range
    front = z > 1e-6
    zs = np.where(front, z, 1.0)
    xy = intr.distort(pc[:, :2] / zs[:, None])
    u = intr.fx * xy[:, 0] + intr.cx
    v = intr.fy * xy[:, 1] + intr.cy
    ok = front & rng_ok & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    return ok, u, v


def synthesize_log(
    gt: GroundTruth,
    world: LandmarkWorld,
    calibration: CalibrationFile,
    noise: NoiseConfig | None = None,
    rates: SensorRates | None = None,
    schedule: DegradationSchedule | None = None,
    seed: int = 0,
    max_range: float = DEFAULT_MAX_RANGE,
    jitter_ns: float = 0.0,
    gravity=GRAVITY,
    meta: dict | None = None,
) -> SimOutput:
    noise = noise if noise is not None else NoiseConfig()
    rates = rates if rates is not None else SensorRates()
    schedule = schedule if schedule is not None else DegradationSchedule()
    rates.validate()
    duration_ns = int(gt.times[-1])
    duration = duration_ns / NS
    schedule.validate(duration)
    if len(world) and int(world.ids.max()) >= FRESH_ID_BASE:
        raise InvalidSpec(f"landmark ids must stay below {FRESH_ID_BASE}")
    N = len(gt.times) - 1
    if N > 0:
        grid = int(round(NS / rates.imu))
        if np.any(np.diff(gt.times) != grid):
            raise InvalidRates("IMU rate does not match the ground-truth grid")
    g = np.asarray(gravity, dtype=float)
    seed = int(seed)
    rig = calibration.rig

    # IMU with bias random walk
    rng = np.random.default_rng([seed, _STREAM_IMU])
    dt = 1.0 / rates.imu
    spec = noise.imu
    steps_g = rng.normal(0.0, 1.0, (N, 3)) * spec.gyro_bias_rw * math.sqrt(dt)
    steps_a = rng.normal(0.0, 1.0, (N, 3)) * spec.accel_bias_rw * math.sqrt(dt)
    bg = np.asarray(noise.gyro_bias, dtype=float) + np.vstack((np.zeros((1, 3)), np.cumsum(steps_g, axis=0)))
    ba = np.asarray(noise.accel_bias, dtype=float) + np.vstack((np.zeros((1, 3)), np.cumsum(steps_a, axis=0)))
    gt.gyro_bias, gt.accel_bias = bg, ba
    white_g = rng.normal(0.0, 1.0, (N, 3)) * spec.gyro_noise / math.sqrt(dt)
    white_a = rng.normal(0.0, 1.0, (N, 3)) * spec.accel_noise / math.sqrt(dt)
    gyro = gt.omega + bg[:N] + white_g
    accel = gt.specific_force(g) + ba[:N] + white_a
    streams = []
    imu_recs = [ImuSample(int(t), tuple(map(float, w)), tuple(map(float, a))) for t, w, a in zip(gt.times[:N], gyro, accel)]
    streams.append((0, imu_recs))

    # DVL
    rng = np.random.default_rng([seed, _STREAM_DVL])
    jrng = np.random.default_rng([seed, _STREAM_JITTER])
    t_dvl = _jitter(sample_times(duration, rates.dvl), jitter_ns, jrng, duration_ns)
    dvl_recs = []
    if len(t_dvl):
        R, v, _ = gt.sample(t_dvl)
        omega = gt.omega[gt.interval(t_dvl)] if N > 0 else np.zeros((len(t_dvl), 3))
        ext = calibration.dvl_extrinsic
        body = np.einsum("nji,nj->ni", R, v) + np.cross(omega, ext.translation)
        meas = body @ ext.R + rng.normal(0.0, 1.0, (len(t_dvl), 3)) * noise.dvl_sigma
        dvl_recs = [DvlSample(int(t), tuple(map(float, m))) for t, m in zip(t_dvl, meas)]
    streams.append((1, dvl_recs))

    # depth
    rng = np.random.default_rng([seed, _STREAM_DEPTH])
    t_dep = _jitter(sample_times(duration, rates.depth), jitter_ns, jrng, duration_ns)
    dep_recs = []
    if len(t_dep):
        _, _, p = gt.sample(t_dep)
        z = p[:, 2] + rng.normal(0.0, 1.0, len(t_dep)) * noise.depth_sigma
        dep_recs = [DepthSample(int(t), float(d)) for t, d in zip(t_dep, z)]
    streams.append((2, dep_recs))

    # cameras: visibility first (true ids), then track ids from the re-association draws
    rng = np.random.default_rng([seed, _STREAM_CAMERA])
    t_cam = sample_times(duration, rates.camera)
    t_cam = t_cam[~schedule.in_blackout(t_cam)]
    frames = []  # (t, cam index, true ids, u, v)
    if len(t_cam) and len(world):
        R, _, p = gt.sample(t_cam)
        for ci, cam in enumerate(rig.cameras):
            Rc, tc = cam.extrinsic.R, cam.extrinsic.translation
            for n, t in enumerate(t_cam):
                R_wc = R[n] @ Rc
                t_wc = R[n] @ tc + p[n]
                ok, u, v = _visible(R_wc, t_wc, world.positions, cam.intrinsics, max_range)
                idx = np.flatnonzero(ok)
                frames.append((int(t), ci, idx, u[idx], v[idx]))
    frames.sort(key=lambda f: (f[0], f[1]))

    seg_starts = [0] + [int(round(b * NS)) for _, b in schedule.blackouts]
    probs = schedule.probabilities()
    emitted = {}
    segments = []
    seen_before = set()
    seg_frames = [[] for _ in seg_starts]
    for f in frames:
        s = int(np.searchsorted(seg_starts, f[0], side="right")) - 1
        seg_frames[s].append(f)
    cam_recs = []
    for s, fs in enumerate(seg_frames):
        seen_now = set()
        for f in fs:
            seen_now.update(int(world.ids[i]) for i in f[2])
        if s > 0:
            emitted = draw_reassociation(seen_now & seen_before, probs[s - 1], s - 1, seed, emitted)
        for lid in seen_now:
            emitted.setdefault(lid, lid)
        segments.append((seg_starts[s], {emitted[lid]: lid for lid in sorted(seen_now)}))
        seen_before |= seen_now
        for t, ci, idx, u, v in fs:
            cam = rig.cameras[ci]
            k = cam.intrinsics
            un = u + rng.normal(0.0, 1.0, len(u)) * noise.pixel_sigma
            vn = v + rng.normal(0.0, 1.0, len(v)) * noise.pixel_sigma
            keep = (un >= 0) & (un < k.width) & (vn >= 0) & (vn < k.height)
            ids = [emitted[int(world.ids[i])] for i in idx[keep]]
            obs = sorted(zip(ids, map(float, un[keep]), map(float, vn[keep])))
            cam_recs.append(CameraRecord(t, cam.camera_id, tuple(obs)))
    streams.append((3, cam_recs))

    merged = [(r.t, order, n, r) for order, recs in streams for n, r in enumerate(recs)]
    merged.sort(key=lambda x: x[:3])
    records = [m[3] for m in merged]
    s0 = gt.state(0)
    header = {
        "seed": seed,
        "duration_ns": duration_ns,
        "gravity": [float(x) for x in g],
        "initial_state": {
            "t": int(gt.times[0]),
            "position": [float(x) for x in s0.position],
            "quaternion": [float(x) for x in s0.pose.rotation.quaternion],
            "velocity": [float(x) for x in s0.velocity],
            "gyro_bias": [float(x) for x in s0.bias.gyro],
            "accel_bias": [float(x) for x in s0.bias.accel],
        },
        "rates": {"imu": rates.imu, "camera": rates.camera, "dvl": rates.dvl, "depth": rates.depth},
    }
    if meta:
        header.update(meta)
    return SimOutput(gt, SensorLog(records, header), world, calibration, segments, schedule)


def reassociation_oracle(sim: SimOutput, t: float) -> dict:
    """Emitted track id -> true landmark id for the segment holding time ``t`` (seconds)."""
    t_ns = int(round(t * NS))
    starts = [s for s, _ in sim.reassociation]
    if not starts:
        return {}
    k = max(int(np.searchsorted(starts, t_ns, side="right")) - 1, 0)
    return dict(sim.reassociation[k][1])

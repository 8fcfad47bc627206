"""Bind time-stamped sensor records to nav-state (keyframe) times."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..sensors import ImuSample

DEFAULT_TOLERANCE_NS = 50_000_000


@dataclass
class Association:
    state_times: np.ndarray
    camera: dict = field(default_factory=dict)  # state index -> [CameraRecord]
    dvl: list = field(default_factory=list)  # (state index, DvlSample)
    depth: list = field(default_factory=list)  # (state index, DepthSample)
    imu_batches: list = field(default_factory=list)  # per interval: [ImuSample]
    imu_synthetic: list = field(default_factory=list)  # per interval: [bool]
    imu_samples: list = field(default_factory=list)  # all raw IMU samples, time-ordered
    report: dict = field(default_factory=dict)


def nearest_state(times: np.ndarray, t: int, tolerance_ns: int) -> int | None:
    """Index of the nearest state within tolerance; ties go to the earlier state."""
    if len(times) == 0:
        return None
    k = int(np.searchsorted(times, t))
    best = None
    for j in (k - 1, k):
        if 0 <= j < len(times):
            d = abs(int(times[j]) - int(t))
            if d <= tolerance_ns and (best is None or d < best[1]):
                best = (j, d)
    return None if best is None else best[0]


def _lerp(a: ImuSample, b: ImuSample, t: int) -> ImuSample:
    s = (t - a.t) / (b.t - a.t)
    g = tuple(float(x) for x in (1 - s) * np.asarray(a.gyro) + s * np.asarray(b.gyro))
    f = tuple(float(x) for x in (1 - s) * np.asarray(a.accel) + s * np.asarray(b.accel))
    return ImuSample(int(t), g, f)


def associate(records, state_times, tolerance_ns: int = DEFAULT_TOLERANCE_NS) -> Association:
    """Group records per state.

    Camera records bind to the state with the identical timestamp. DVL and depth
    bind to the nearest state within ``tolerance_ns``. IMU samples are split into
    the intervals ``[t_i, t_{i+1})``; when no sample falls on ``t_i`` a synthetic
    one is interpolated linearly from its neighbours.
    """
    times = np.asarray(state_times, dtype=np.int64)
    index = {int(t): i for i, t in enumerate(times)}
    out = Association(times)
    unassoc = {"camera": 0, "dvl": 0, "depth": 0}
    imu = []
    for r in records:
        kind = r.kind
        if kind == "imu":
            imu.append(r)
        elif kind == "camera":
            i = index.get(int(r.t))
            if i is None:
                unassoc["camera"] += 1
            else:
                out.camera.setdefault(i, []).append(r)
        elif kind in ("dvl", "depth"):
            i = nearest_state(times, r.t, tolerance_ns)
            if i is None:
                unassoc[kind] += 1
            else:
                getattr(out, kind).append((i, r))
    out.imu_samples = imu

    imu_t = np.fromiter((s.t for s in imu), dtype=np.int64, count=len(imu))
    n_out = 0
    n_syn = 0
    for i in range(len(times) - 1):
        t0, t1 = int(times[i]), int(times[i + 1])
        a = int(np.searchsorted(imu_t, t0, side="left"))
        b = int(np.searchsorted(imu_t, t1, side="left"))
        batch = list(imu[a:b])
        flags = [False] * len(batch)
        if a > 0 and a < len(imu) and int(imu_t[a]) != t0:
            batch.insert(0, _lerp(imu[a - 1], imu[a], t0))
            flags.insert(0, True)
            n_syn += 1
        out.imu_batches.append(batch)
        out.imu_synthetic.append(flags)
        n_out += len(batch)
    if len(times) >= 2:
        inside = int(np.count_nonzero((imu_t >= times[0]) & (imu_t < times[-1])))
    else:
        inside = 0
    out.report = {
        "imu_in": len(imu),
        "imu_synthetic": n_syn,
        "imu_out": n_out,
        "imu_unassociated": len(imu) - inside,
        "camera_associated": sum(len(v) for v in out.camera.values()),
        "camera_unassociated": unassoc["camera"],
        "dvl_associated": len(out.dvl),
        "dvl_unassociated": unassoc["dvl"],
        "depth_associated": len(out.depth),
        "depth_unassociated": unassoc["depth"],
    }
    return out

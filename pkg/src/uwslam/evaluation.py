"""Trajectory alignment (Umeyama) and absolute / relative pose error metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateConfiguration, InsufficientOverlap, InsufficientSpan
from .geometry import Pose, PoseTrajectory, Rotation

ASSOCIATION_TOLERANCE_NS = 10_000_000
MODES = ("rigid", "similarity")


@dataclass
class AlignmentResult:
    transform: Pose  # maps estimate positions onto the reference frame
    scale: float
    ate_rmse: float
    errors: np.ndarray  # per associated pose, m
    rotation_errors: np.ndarray  # per associated pose after alignment, rad
    times: np.ndarray  # reference timestamps of the associated pairs
    mode: str = "rigid"

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.scale * (p @ self.transform.R.T) + self.transform.translation


def associate_times(est_times, ref_times, tolerance_ns: int = ASSOCIATION_TOLERANCE_NS):
    """Index pairs ``(i_est, i_ref)`` matching each reference stamp to its nearest estimate stamp."""
    est_times = np.asarray(est_times, dtype=np.int64)
    ref_times = np.asarray(ref_times, dtype=np.int64)
    if len(est_times) == 0 or len(ref_times) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    k = np.searchsorted(est_times, ref_times)
    lo = np.clip(k - 1, 0, len(est_times) - 1)
    hi = np.clip(k, 0, len(est_times) - 1)
    pick = np.where(np.abs(est_times[hi] - ref_times) < np.abs(est_times[lo] - ref_times), hi, lo)
    ok = np.abs(est_times[pick] - ref_times) <= tolerance_ns
    ie, ir = pick[ok], np.flatnonzero(ok)
    # one reference pose per estimate pose
    _, first = np.unique(ie, return_index=True)
    return ie[first], ir[first]


def umeyama(src: np.ndarray, dst: np.ndarray, with_scale: bool = False):
    """Least-squares ``R, t, s`` minimising ``sum |dst - (s R src + t)|^2``."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    n = len(src)
    cov = xd.T @ xs / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_s = np.sum(xs * xs) / n
        s = float(np.trace(np.diag(D) @ S) / var_s)
    else:
        s = 1.0
    t = mu_d - s * R @ mu_s
    return R, t, s


def _check_geometry(points: np.ndarray, tol: float = 1e-9):
    sv = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if sv[0] <= tol or sv[1] <= tol * max(sv[0], 1.0):
        raise DegenerateConfiguration("associated positions are collinear; alignment is not unique")


def align(est: PoseTrajectory, ref: PoseTrajectory, mode: str = "rigid", tolerance_ns: int = ASSOCIATION_TOLERANCE_NS) -> AlignmentResult:
    """Align ``est`` onto ``ref`` by their positions and report the ATE."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    ie, ir = associate_times(est.times, ref.times, tolerance_ns)
    if len(ie) < 3:
        raise InsufficientOverlap(f"only {len(ie)} pose pairs within {tolerance_ns} ns; need at least 3")
    pe = est.positions[ie]
    pr = ref.positions[ir]
    _check_geometry(pr)
    R, t, s = umeyama(pe, pr, with_scale=mode == "similarity")
    moved = s * pe @ R.T + t
    err = np.linalg.norm(moved - pr, axis=1)
    Ralign = Rotation.from_matrix(R)
    rot_err = np.array([(ref.poses[j].rotation.inverse() @ Ralign @ est.poses[i].rotation).angle() for i, j in zip(ie, ir)])
    return AlignmentResult(
        Pose(Ralign, t), s, float(np.sqrt(np.mean(err**2))), err, rot_err, ref.times[ir], mode
    )


@dataclass
class RpeResult:
    delta: float
    translation: np.ndarray  # per pair, m
    rotation: np.ndarray  # per pair, rad
    times: np.ndarray  # start stamps

    @property
    def translation_rmse(self) -> float:
        return float(np.sqrt(np.mean(self.translation**2)))

    @property
    def rotation_rmse(self) -> float:
        return float(np.sqrt(np.mean(self.rotation**2)))


def rpe(est: PoseTrajectory, ref: PoseTrajectory, delta: float, tolerance_ns: int = ASSOCIATION_TOLERANCE_NS) -> RpeResult:
    """Relative pose error over all associated pairs ``(t, t + delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    d_ns = int(round(delta * 1e9))
    for name, tr in (("estimate", est), ("reference", ref)):
        if len(tr) == 0 or int(tr.times[-1] - tr.times[0]) < d_ns:
            raise InsufficientSpan(f"{name} spans less than {delta} s")
    ie, ir = associate_times(est.times, ref.times, tolerance_ns)
    rt = ref.times[ir]
    j = np.searchsorted(rt, rt + d_ns)
    jc = np.minimum(j, len(rt) - 1)
    ok = (j < len(rt)) & (np.abs(rt[jc] - (rt + d_ns)) <= tolerance_ns)
    a = np.flatnonzero(ok)
    if len(a) == 0:
        raise InsufficientSpan(f"no associated pose pairs {delta} s apart")
    te, tr_, start = [], [], []
    for k in a:
        b = jc[k]
        dref = ref.poses[ir[k]].inverse() @ ref.poses[ir[b]]
        dest = est.poses[ie[k]].inverse() @ est.poses[ie[b]]
        e = dref.inverse() @ dest
        te.append(np.linalg.norm(e.translation))
        tr_.append(e.rotation.angle())
        start.append(rt[k])
    return RpeResult(float(delta), np.array(te), np.array(tr_), np.array(start, dtype=np.int64))


def endpoint_error(est: PoseTrajectory, ref: PoseTrajectory, tolerance_ns: int = ASSOCIATION_TOLERANCE_NS) -> float:
    """Translation error of the last associated pose, without alignment."""
    ie, ir = associate_times(est.times, ref.times, tolerance_ns)
    if len(ie) == 0:
        raise InsufficientOverlap("trajectories share no timestamps")
    return float(np.linalg.norm(est.poses[ie[-1]].translation - ref.poses[ir[-1]].translation))


def metrics(est: PoseTrajectory, ref: PoseTrajectory, mode: str = "rigid", delta: float = 1.0) -> dict:
    al = align(est, ref, mode)
    out = {
        "mode": mode,
        "pairs": int(len(al.errors)),
        "ate_rmse": al.ate_rmse,
        "ate_max": float(al.errors.max()),
        "rotation_rmse_deg": float(np.degrees(np.sqrt(np.mean(al.rotation_errors**2)))),
        "scale": al.scale,
        "endpoint_error": endpoint_error(est, ref),
        "alignment": {"quaternion": [float(x) for x in al.transform.rotation.quaternion], "translation": [float(x) for x in al.transform.translation]},
    }
    try:
        r = rpe(est, ref, delta)
        out["rpe"] = {"delta": delta, "pairs": int(len(r.translation)), "translation_rmse": r.translation_rmse, "rotation_rmse_deg": float(np.degrees(r.rotation_rmse))}
    except InsufficientSpan:
        out["rpe"] = None
    return out


def format_metrics(m: dict) -> str:
    return json.dumps(m, indent=2, sort_keys=True) + "\n"


def per_pose_csv(result: AlignmentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "position_error", "rotation_error_deg"])
    for t, e, r in zip(result.times, result.errors, result.rotation_errors):
        w.writerow([int(t), f"{e:.9f}", f"{np.degrees(r):.9f}"])
    return buf.getvalue()

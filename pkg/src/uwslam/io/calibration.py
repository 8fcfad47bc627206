"""Rig calibration documents (YAML).

Layout::

    cameras:
      - id: cam0
        intrinsics: {fx: 920.3, fy: 920.3, cx: 800, cy: 600, width: 1600, height: 1200, k1: 0, k2: 0}
        extrinsic:                       # camera -> rig body
          translation: [0.0, 0.0, 0.0]
          rotation: [[...], [...], [...]]  # or quaternion: [qw, qx, qy, qz]
                                           # or tilt_deg: 30, yaw_deg: 0
    dvl:
      extrinsic: {translation: [...], quaternion: [...]}   # DVL -> body
    imu:
      extrinsic: {...}                                     # IMU -> body, default identity

Intrinsics may give ``hfov_deg`` with ``width``/``height`` instead of focal lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from ..exceptions import NonOrthonormalRotation, SchemaError
from ..geometry import CameraIntrinsics, Pose, RigCalibration, RigCamera, Rotation, camera_mount

ORTHO_FIX_TOL = 1e-6
ORTHO_FAIL_TOL = 1e-3


@dataclass(frozen=True)
class CalibrationFile:
    rig: RigCalibration
    dvl_extrinsic: Pose = field(default_factory=Pose.identity)
    imu_extrinsic: Pose = field(default_factory=Pose.identity)


def _orthonormalize(R, where: str) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise SchemaError(f"{where}: rotation must be a finite 3x3 matrix")
    drift = float(np.linalg.norm(R.T @ R - np.eye(3)))
    if drift > ORTHO_FAIL_TOL or np.linalg.det(R) <= 0:
        raise NonOrthonormalRotation(f"{where}: rotation is not orthonormal (drift {drift:.3g})")
    if drift > ORTHO_FIX_TOL:
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
    return R


def _parse_pose(d, where: str) -> Pose:
    if d is None:
        return Pose.identity()
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: extrinsic must be a mapping")
    t = d.get("translation", [0.0, 0.0, 0.0])
    try:
        t = np.asarray(t, dtype=float).reshape(3)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: translation must be 3 numbers") from None
    given = [k for k in ("rotation", "quaternion", "tilt_deg") if k in d]
    if len(given) > 1:
        raise SchemaError(f"{where}: give only one of rotation / quaternion / tilt_deg")
    if "rotation" in d:
        try:
            R = np.asarray(d["rotation"], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError(f"{where}: rotation must be numeric") from None
        return Pose(Rotation.from_matrix(_orthonormalize(R, where)), t)
    if "quaternion" in d:
        try:
            q = np.asarray(d["quaternion"], dtype=float).reshape(4)
        except (TypeError, ValueError):
            raise SchemaError(f"{where}: quaternion must be 4 numbers [qw, qx, qy, qz]") from None
        if abs(float(np.linalg.norm(q)) - 1.0) > ORTHO_FAIL_TOL:
            raise NonOrthonormalRotation(f"{where}: quaternion norm {np.linalg.norm(q):.6g} is not 1")
        return Pose(Rotation(q), t)
    if "tilt_deg" in d or "yaw_deg" in d:
        return camera_mount(float(d.get("tilt_deg", 0.0)), float(d.get("yaw_deg", 0.0)), t)
    return Pose(Rotation.identity(), t)


def _parse_intrinsics(d, where: str) -> CameraIntrinsics:
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: intrinsics must be a mapping")
    try:
        w, h = int(d["width"]), int(d["height"])
        k1, k2 = float(d.get("k1", 0.0)), float(d.get("k2", 0.0))
        if "hfov_deg" in d and "fx" not in d:
            return CameraIntrinsics.from_fov(w, h, float(d["hfov_deg"]), k1, k2)
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), w, h, k1, k2)
    except KeyError as exc:
        raise SchemaError(f"{where}: missing intrinsics field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def parse_calibration(doc: dict) -> CalibrationFile:
    if not isinstance(doc, dict):
        raise SchemaError("calibration document must be a mapping")
    cams = doc.get("cameras")
    if not isinstance(cams, list) or not cams:
        raise SchemaError("'cameras' must be a non-empty list")
    out = []
    seen = set()
    for n, c in enumerate(cams):
        if not isinstance(c, dict) or "id" not in c:
            raise SchemaError(f"cameras[{n}]: missing 'id'")
        cid = str(c["id"])
        if cid in seen:
            raise SchemaError(f"duplicate camera_id {cid!r}")
        seen.add(cid)
        where = f"camera {cid}"
        out.append(RigCamera(cid, _parse_intrinsics(c.get("intrinsics"), where), _parse_pose(c.get("extrinsic"), where)))
    dvl = _parse_pose((doc.get("dvl") or {}).get("extrinsic"), "dvl")
    imu = _parse_pose((doc.get("imu") or {}).get("extrinsic"), "imu")
    return CalibrationFile(RigCalibration(tuple(out)), dvl, imu)


def load_calibration(text) -> CalibrationFile:
    """Parse calibration YAML text (or bytes)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"calibration is not valid YAML: {exc}") from None
    return parse_calibration(doc)


def _pose_doc(p: Pose) -> dict:
    return {
        "translation": [float(x) for x in p.translation],
        "quaternion": [float(x) for x in p.rotation.quaternion],
    }


def calibration_to_dict(calib: CalibrationFile) -> dict:
    cams = []
    for c in calib.rig.cameras:
        k = c.intrinsics
        cams.append(
            {
                "id": c.camera_id,
                "intrinsics": {
                    "fx": float(k.fx), "fy": float(k.fy), "cx": float(k.cx), "cy": float(k.cy),
                    "width": int(k.width), "height": int(k.height), "k1": float(k.k1), "k2": float(k.k2),
                },
                "extrinsic": _pose_doc(c.extrinsic),
            }
        )
    return {
        "cameras": cams,
        "dvl": {"extrinsic": _pose_doc(calib.dvl_extrinsic)},
        "imu": {"extrinsic": _pose_doc(calib.imu_extrinsic)},
    }


def dump_calibration(calib: CalibrationFile) -> str:
    return yaml.safe_dump(calibration_to_dict(calib), sort_keys=False, default_flow_style=None)


def read_calibration(path) -> CalibrationFile:
    with open(path, encoding="utf-8") as fh:
        return load_calibration(fh.read())


def write_calibration(path, calib: CalibrationFile) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_calibration(calib))

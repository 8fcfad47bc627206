"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, NonFinitePoint
from .geometry import PoseTrajectory
from .io.calibration import CalibrationFile
from .io.log import SensorLog


def check_points(points, name: str = "points") -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1 and p.size == 3:
        p = p.reshape(1, 3)
    if p.ndim != 2 or p.shape[1] != 3:
        raise DimensionMismatch(f"{name} must have shape (N, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonFinitePoint(f"{name} contains non-finite values")
    return p


def check_positive(value, name: str) -> float:
    v = float(value)
    if not (v > 0 and np.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return v


def check_trajectory(traj, name: str = "trajectory") -> PoseTrajectory:
    if not isinstance(traj, PoseTrajectory):
        raise TypeError(f"{name} must be a PoseTrajectory, got {type(traj).__name__}")
    if len(traj) and np.any(np.diff(traj.times) <= 0):
        raise ValueError(f"{name} timestamps must be strictly increasing")
    return traj


def check_log(log) -> SensorLog:
    if not isinstance(log, SensorLog):
        raise TypeError(f"expected a SensorLog, got {type(log).__name__}")
    return log


def check_calibration(cal) -> CalibrationFile:
    if not isinstance(cal, CalibrationFile):
        raise TypeError(f"expected a CalibrationFile, got {type(cal).__name__}")
    return cal

"""End-to-end runs: sensor log and calibration in, optimized trajectory and landmarks out."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import PoseTrajectory
from .graph import SolveReport, SolverOptions, solve
from .graph.builder import BuildConfig, BuiltProblem, build_graph
from .io.calibration import CalibrationFile
from .io.log import SensorLog
from .semantics import LabeledPointCloud

log = logging.getLogger(__name__)


@dataclass
class SolveResult:
    problem: BuiltProblem
    report: SolveReport
    trajectory: PoseTrajectory
    landmark_ids: np.ndarray
    landmarks: np.ndarray  # (N, 3)

    def landmark_cloud(self, classes=None) -> LabeledPointCloud:
        cls = np.zeros(len(self.landmarks), dtype=np.uint8) if classes is None else classes
        return LabeledPointCloud(self.landmarks, cls)


def run_solve(
    sensor_log: SensorLog,
    calibration: CalibrationFile,
    config: BuildConfig | None = None,
    options: SolverOptions | None = None,
    initial_states=None,
    initial_landmarks=None,
) -> SolveResult:
    config = config if config is not None else BuildConfig()
    problem = build_graph(sensor_log, calibration, config, initial_states, initial_landmarks)
    log.info("graph: %s", problem.info["factor_census"])
    report = solve(problem.graph, options)
    lms = problem.landmarks()
    ids = np.array(sorted(lms), dtype=np.int64)
    pts = np.array([lms[i] for i in ids]).reshape(-1, 3)
    return SolveResult(problem, report, problem.trajectory(), ids, pts)

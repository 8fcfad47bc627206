"""Deterministic survey simulation: trajectories, landmark worlds and sensor logs."""

from .scenarios import PRESETS, CameraMount, Scenario, preset, simulate
from .synth import (
    FRESH_ID_BASE,
    DegradationSchedule,
    NoiseConfig,
    SensorRates,
    SimOutput,
    draw_reassociation,
    reassociation_oracle,
    sample_times,
    synthesize_log,
)
from .trajectory import (
    ConcentricCircles,
    GroundTruth,
    Lawnmower,
    ReturnLoop,
    SurveySpec,
    generate_trajectory,
    loops_swept,
)
from .world import Cluster, LandmarkWorld, WorldSpec, generate_world

__all__ = [
    "PRESETS",
    "CameraMount",
    "Scenario",
    "preset",
    "simulate",
    "FRESH_ID_BASE",
    "DegradationSchedule",
    "NoiseConfig",
    "SensorRates",
    "SimOutput",
    "draw_reassociation",
    "reassociation_oracle",
    "sample_times",
    "synthesize_log",
    "ConcentricCircles",
    "GroundTruth",
    "Lawnmower",
    "ReturnLoop",
    "SurveySpec",
    "generate_trajectory",
    "loops_swept",
    "Cluster",
    "LandmarkWorld",
    "WorldSpec",
    "generate_world",
]

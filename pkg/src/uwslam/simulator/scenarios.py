"""Scenario bundles and the shipped desk-scale presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..geometry import CameraIntrinsics, Pose, RigCalibration, RigCamera, camera_mount
from ..io.calibration import CalibrationFile
from ..semantics import SemanticClass
from .synth import DegradationSchedule, NoiseConfig, SensorRates, SimOutput, synthesize_log
from .trajectory import ConcentricCircles, Lawnmower, ReturnLoop, SurveySpec, generate_trajectory
from .world import Cluster, WorldSpec, generate_world

WIDTH, HEIGHT, HFOV_DEG = 1600, 1200, 82.0


@dataclass(frozen=True)
class CameraMount:
    camera_id: str
    tilt_deg: float = 0.0
    yaw_deg: float = 0.0
    translation: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    survey: SurveySpec
    world: WorldSpec
    cameras: tuple = (CameraMount("cam0"),)
    image_size: tuple = (WIDTH, HEIGHT)
    hfov_deg: float = HFOV_DEG
    dvl_translation: tuple = (0.3, 0.0, 0.25)
    rates: SensorRates = field(default_factory=SensorRates)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    schedule: DegradationSchedule = field(default_factory=DegradationSchedule)
    keyframe_rate: float = 10.0
    max_range: float = 8.0
    jitter_ns: float = 0.0

    @property
    def seed(self) -> int:
        return self.survey.seed

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, survey=replace(self.survey, seed=int(seed)))

    def with_duration(self, duration: float) -> Scenario:
        return replace(self, survey=replace(self.survey, duration=float(duration)))

    def noiseless(self) -> Scenario:
        return replace(self, noise=NoiseConfig.noiseless())

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.image_size[0], self.image_size[1], self.hfov_deg)

    def calibration(self) -> CalibrationFile:
        k = self.intrinsics()
        cams = tuple(RigCamera(c.camera_id, k, camera_mount(c.tilt_deg, c.yaw_deg, c.translation)) for c in self.cameras)
        return CalibrationFile(RigCalibration(cams), Pose(translation=self.dvl_translation), Pose.identity())


def simulate(scenario: Scenario) -> SimOutput:
    """Ground truth, world and sensor log for a scenario; fully determined by its seed."""
    gt = generate_trajectory(replace(scenario.survey, imu_rate=scenario.rates.imu))
    world = generate_world(scenario.world, scenario.seed)
    return synthesize_log(
        gt,
        world,
        scenario.calibration(),
        scenario.noise,
        scenario.rates,
        scenario.schedule,
        scenario.seed,
        max_range=scenario.max_range,
        jitter_ns=scenario.jitter_ns,
        meta={"scenario": scenario.name, "keyframe_rate": scenario.keyframe_rate},
    )


def _wreck_world(center=(0.0, 0.0), seabed_depth=12.0, n=120, inner=3.5, outer=6.5):
    # debris strewn around the hull, under the survey circles
    cx, cy = center
    return WorldSpec(
        (Cluster("ring", int(SemanticClass.SEABED), n, {"center": (cx, cy, seabed_depth), "inner": inner, "outer": outer}),)
    )


def _pipeline_world(length=24.0, depth=12.0, y=0.0, n_pipe=150, n_support=60, seabed=(0.6, 28.0, 8.0)):
    density, sx, sy = seabed
    return WorldSpec(
        (
            Cluster("cylinder", int(SemanticClass.PIPELINE), n_pipe, {"start": (0.0, y, depth - 1.0), "end": (length, y, depth - 1.0), "radius": 0.3}),
            Cluster("posts", int(SemanticClass.PIPELINE_SUPPORT), n_support, {"start": (1.0, y, depth - 0.7), "end": (length - 1.0, y, depth - 0.7), "posts": 6, "height": 0.7}),
            Cluster("plane", int(SemanticClass.SEABED), None, {"center": (length / 2, y, depth), "size": (sx, sy)}),
        ),
        density=density,
    )


def _survey_rig(tilt=60.0, spread=30.0):
    # one camera ahead, two splayed to the sides, all pitched towards the seabed
    return (CameraMount("cam0", tilt, 0.0), CameraMount("cam1", tilt, -spread), CameraMount("cam2", tilt, spread))


def _down_rig():
    return (CameraMount("cam0", 30.0, 0.0), CameraMount("cam1", 45.0, 0.0), CameraMount("cam2", 60.0, 0.0))


def hercules_small(seed: int = 7) -> Scenario:
    return Scenario(
        "hercules_small",
        SurveySpec(ConcentricCircles((0.0, 0.0), (5.0,), (9.5, 10.0), 60.0), speed=0.5, duration=60.0, seed=seed),
        _wreck_world(),
        _survey_rig(),
        max_range=3.0,
    )


def synthetic_wreck(seed: int = 7) -> Scenario:
    return Scenario(
        "synthetic_wreck",
        SurveySpec(ConcentricCircles((0.0, 0.0), (5.0, 5.5), (9.5, 10.0), 71.0), speed=0.5, duration=71.0, seed=seed),
        _wreck_world(),
        _survey_rig(),
        max_range=3.0,
    )


def plm_small(seed: int = 7) -> Scenario:
    return Scenario(
        "plm_small",
        SurveySpec(Lawnmower((0.0, -2.0), (22.0, 4.0), 4.0, 10.0), speed=0.5, duration=80.0, seed=seed),
        _pipeline_world(length=24.0, y=0.0, seabed=(0.25, 28.0, 10.0)),
        _down_rig(),
        schedule=DegradationSchedule(((30.0, 40.0),), (1.0,)),
        max_range=4.0,
    )


def tbs_small(seed: int = 7) -> Scenario:
    return Scenario(
        "tbs_small",
        SurveySpec(ReturnLoop(((0.0, 0.0, 10.0), (14.0, 0.0, 10.0), (14.0, 9.0, 10.0), (0.0, 9.0, 10.0))), speed=0.5, duration=90.0, seed=seed),
        WorldSpec(
            (
                Cluster("ring", int(SemanticClass.SEABED), 80, {"center": (0.0, 0.0, 12.0), "inner": 0.5, "outer": 4.0}),
                Cluster("plane", int(SemanticClass.SEABED), None, {"center": (7.0, 4.5, 12.0), "size": (22.0, 17.0)}),
            ),
            density=0.12,
        ),
        _down_rig(),
        schedule=DegradationSchedule(((78.0, 84.0),), (1.0,)),
        max_range=4.0,
    )


def pipeline_small(seed: int = 7) -> Scenario:
    return Scenario(
        "pipeline_small",
        SurveySpec(Lawnmower((0.0, -1.0), (20.0, 2.0), 2.0, 10.0), speed=0.5, duration=40.0, seed=seed),
        _pipeline_world(length=22.0, y=0.0, seabed=(1.0, 24.0, 6.0)),
        _down_rig(),
    )


PRESETS = {
    "hercules_small": hercules_small,
    "synthetic_wreck": synthetic_wreck,
    "plm_small": plm_small,
    "tbs_small": tbs_small,
    "pipeline_small": pipeline_small,
}


def preset(name: str, seed: int | None = None) -> Scenario:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory() if seed is None else factory(seed)


def circle_period(radius: float, speed: float) -> float:
    return 2.0 * math.pi * radius / speed

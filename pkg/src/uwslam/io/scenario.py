"""Scenario documents (YAML): either a preset name with overrides or a full description."""

from __future__ import annotations

from dataclasses import asdict, fields, replace

import yaml

from ..exceptions import SchemaError
from ..sensors import ImuNoiseSpec
from ..simulator.scenarios import PRESETS, CameraMount, Scenario, preset
from ..simulator.synth import DegradationSchedule, NoiseConfig, SensorRates
from ..simulator.trajectory import ConcentricCircles, Lawnmower, ReturnLoop, SurveySpec
from ..simulator.world import Cluster, WorldSpec

PATTERNS = {"concentric_circles": ConcentricCircles, "lawnmower": Lawnmower, "return_loop": ReturnLoop}
_PATTERN_NAMES = {v: k for k, v in PATTERNS.items()}
TOP_LEVEL = {
    "name", "preset", "seed", "duration", "survey", "world", "cameras", "image_size", "hfov_deg",
    "dvl_translation", "rates", "noise", "schedule", "keyframe_rate", "max_range", "jitter_ns",
}


def _tuples(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuples(v) for v in x)
    return x


def _lists(x):
    if isinstance(x, (list, tuple)):
        return [_lists(v) for v in x]
    if isinstance(x, dict):
        return {k: _lists(v) for k, v in x.items()}
    return x


def _build(cls, doc, what):
    if not isinstance(doc, dict):
        raise SchemaError(f"{what} must be a mapping")
    names = {f.name for f in fields(cls)}
    extra = set(doc) - names
    if extra:
        raise SchemaError(f"unknown {what} field(s) {sorted(extra)}; allowed {sorted(names)}")
    try:
        return cls(**{k: _tuples(v) for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid {what}: {exc}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    pat = sc.survey.pattern
    survey = asdict(sc.survey)
    survey["pattern"] = {"type": _PATTERN_NAMES[type(pat)], **asdict(pat)}
    noise = asdict(sc.noise)
    return _lists({
        "name": sc.name,
        "survey": survey,
        "world": {
            "density": sc.world.density,
            "clusters": [{"shape": c.shape, "semantic_class": c.semantic_class, "count": c.count, "params": dict(c.params)} for c in sc.world.clusters],
        },
        "cameras": [asdict(c) for c in sc.cameras],
        "image_size": sc.image_size,
        "hfov_deg": sc.hfov_deg,
        "dvl_translation": sc.dvl_translation,
        "rates": asdict(sc.rates),
        "noise": noise,
        "schedule": {"blackouts": sc.schedule.blackouts, "recognition": sc.schedule.recognition},
        "keyframe_rate": sc.keyframe_rate,
        "max_range": sc.max_range,
        "jitter_ns": sc.jitter_ns,
    })


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a mapping")
    extra = set(doc) - TOP_LEVEL
    if extra:
        raise SchemaError(f"unknown scenario field(s) {sorted(extra)}; allowed {sorted(TOP_LEVEL)}")
    if "preset" in doc:
        if doc["preset"] not in PRESETS:
            raise SchemaError(f"unknown preset {doc['preset']!r}; choose from {sorted(PRESETS)}")
        sc = preset(doc["preset"])
    elif "survey" in doc and "world" in doc:
        sc = None
    else:
        raise SchemaError("scenario needs either `preset` or both `survey` and `world`")

    kw = {}
    if "survey" in doc:
        s = dict(doc["survey"])
        pat = dict(s.pop("pattern", {"type": "concentric_circles"}))
        kind = pat.pop("type", None)
        if kind not in PATTERNS:
            raise SchemaError(f"survey pattern type must be one of {sorted(PATTERNS)}")
        s["pattern"] = _build(PATTERNS[kind], pat, f"{kind} pattern")
        kw["survey"] = _build(SurveySpec, s, "survey")
    if "world" in doc:
        w = doc["world"]
        if not isinstance(w, dict) or "clusters" not in w:
            raise SchemaError("world needs a `clusters` list")
        clusters = []
        for c in w["clusters"]:
            c = dict(c)
            params = c.pop("params", {})
            cl = _build(Cluster, c, "cluster")
            clusters.append(replace(cl, params={k: _tuples(v) for k, v in params.items()}))
        kw["world"] = WorldSpec(tuple(clusters), float(w.get("density", WorldSpec.density)))
    if "cameras" in doc:
        kw["cameras"] = tuple(_build(CameraMount, c, "camera") for c in doc["cameras"])
        ids = [c.camera_id for c in kw["cameras"]]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate camera_id in scenario")
    if "rates" in doc:
        kw["rates"] = _build(SensorRates, doc["rates"], "rates")
    if "noise" in doc:
        n = dict(doc["noise"])
        if "imu" in n:
            n["imu"] = _build(ImuNoiseSpec, n["imu"], "imu noise")
        kw["noise"] = _build(NoiseConfig, n, "noise")
    if "schedule" in doc:
        kw["schedule"] = _build(DegradationSchedule, doc["schedule"], "schedule")
    for key in ("name", "image_size", "hfov_deg", "dvl_translation", "keyframe_rate", "max_range", "jitter_ns"):
        if key in doc:
            kw[key] = _tuples(doc[key])
    if sc is None:
        kw.setdefault("name", "custom")
        try:
            sc = Scenario(**kw)
        except TypeError as exc:
            raise SchemaError(str(exc)) from exc
    else:
        sc = replace(sc, **kw)
    if "seed" in doc:
        sc = sc.with_seed(int(doc["seed"]))
    if "duration" in doc:
        sc = sc.with_duration(float(doc["duration"]))
    return sc


def load_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"scenario is not valid YAML: {exc}") from exc
    return scenario_from_dict(doc)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=True, default_flow_style=None)


def read_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as f:
        return load_scenario(f.read())


def write_scenario(path, sc: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_scenario(sc))


SCHEMA_HELP = """\
Scenario file (YAML). Either start from a preset:

  preset: hercules_small     # one of: {presets}
  seed: 7                    # optional overrides
  duration: 60.0

or describe everything:

  name: my_survey
  survey:   {{pattern: {{type: concentric_circles|lawnmower|return_loop, ...}}, speed, duration, seed}}
  world:    {{density, clusters: [{{shape: box|plane|ring|cylinder|posts, semantic_class, count, params}}]}}
  cameras:  [{{camera_id, tilt_deg, yaw_deg, translation}}]
  rates:    {{imu, camera, dvl, depth}}          # Hz
  noise:    {{pixel_sigma, dvl_sigma, depth_sigma, imu: {{gyro_noise, accel_noise, ...}}}}
  schedule: {{blackouts: [[t0, t1]], recognition: [p]}}
  keyframe_rate, max_range, hfov_deg, image_size, dvl_translation, jitter_ns
""".format(presets=", ".join(sorted(PRESETS)))

"""Command-line entry point: simulate, solve, eval, semantics, report.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
Relative output directories resolve under ``$UWSLAM_OUTPUT_ROOT`` when it is
set. Options given on the command line override the ``--config`` file, which
overrides the built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .evaluation import align, format_metrics, metrics, per_pose_csv
from .exceptions import InvalidSpec, SchemaError, UwslamError
from .graph import C, SolverOptions
from .graph.builder import SENSORS, BuildConfig
from .io.calibration import read_calibration, write_calibration
from .io.log import load_log, save_log
from .io.ply import cloud_from_ply, export_ply, read_ply
from .io.scenario import SCHEMA_HELP, dump_scenario, load_scenario
from .io.trajectory import read_trajectory, write_trajectory
from .pipeline import run_solve
from .semantics import LabeledPointCloud, consistency_report, fuse, project_labels, render_oracle_maps
from .simulator import PRESETS, preset, simulate

log = logging.getLogger("uwslam")

OUTPUT_ROOT_ENV = "UWSLAM_OUTPUT_ROOT"

SOLVE_DEFAULTS = {
    "keyframe_rate": 10.0,
    "pixel_sigma": 1.0,
    "loss": "huber",
    "huber_delta": 1.345,
    "lambda0": 1e-4,
    "max_iterations": 100,
    "optimize_extrinsics": False,
    "disable": [],
}

SOLVE_CONFIG_HELP = """\
Solve config file (YAML), every key optional:

  keyframe_rate: 10.0        # Hz
  pixel_sigma: 1.0           # px
  loss: huber                # huber | none
  huber_delta: 1.345
  lambda0: 1.0e-4
  max_iterations: 100
  optimize_extrinsics: false
  disable: [dvl, depth]      # any of vision, imu, dvl, depth
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers


def output_dir(path: str | None, default: str) -> Path:
    p = Path(path if path else default)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(out: Path, command: str, inputs: dict, config: dict, outputs: list[str]) -> None:
    """Inputs (with content hashes), effective config and outputs; enough to re-run the command.

    Input paths are stored relative to the output directory so that a
    relocated run tree produces the same manifest.
    """
    manifest = {
        "tool": "uwslam",
        "version": __version__,
        "command": command,
        "inputs": {k: {"path": os.path.relpath(os.path.abspath(v), os.path.abspath(out)), "sha256": _sha256(v)} for k, v in sorted(inputs.items())},
        "config": config,
        "config_hash": _config_hash(config),
        "outputs": {name: _sha256(out / name) for name in sorted(outputs)},
    }
    write_json(out / "manifest.json", manifest)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        doc = yaml.safe_load(f) or {}
    if not isinstance(doc, dict):
        raise SchemaError("config file must be a mapping")
    unknown = set(doc) - set(SOLVE_DEFAULTS)
    if unknown:
        raise SchemaError(f"unknown config key(s) {sorted(unknown)}\n{SOLVE_CONFIG_HELP}")
    return doc


def _resolve(args, config: dict) -> dict:
    eff = dict(SOLVE_DEFAULTS)
    eff.update(config)
    for key in SOLVE_DEFAULTS:
        v = getattr(args, key, None)
        if v is not None and key != "disable":
            eff[key] = v
    if args.disable:
        eff["disable"] = sorted(set(args.disable))
    bad = set(eff["disable"]) - set(SENSORS)
    if bad:
        raise UsageError(f"cannot disable {sorted(bad)}; sensors are {list(SENSORS)}")
    if eff["loss"] not in ("huber", "none"):
        raise UsageError("loss must be huber or none")
    eff["disable"] = sorted(eff["disable"])
    return eff


def _scenario_from_arg(name: str):
    if name in PRESETS:
        return preset(name)
    if os.path.exists(name):
        with open(name, encoding="utf-8") as f:
            return load_scenario(f.read())
    raise UsageError(f"--scenario must be a preset ({', '.join(sorted(PRESETS))}) or a scenario file\n\n{SCHEMA_HELP}")


# ------------------------------------------------------------------ commands


def cmd_simulate(args) -> int:
    sc = _scenario_from_arg(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if args.duration is not None:
        sc = sc.with_duration(args.duration)
    if args.noiseless:
        sc = sc.noiseless()
    out = output_dir(args.out, f"sim_{sc.name}_{sc.seed}")
    sim = simulate(sc)
    save_log(out / "log.jsonl", sim.log)
    gt = sim.ground_truth
    keyframes = np.arange(0, len(gt.times), max(int(round(sc.rates.imu / sc.keyframe_rate)), 1))
    write_trajectory(out / "ground_truth.txt", gt.trajectory(gt.times[keyframes]))
    write_calibration(out / "calibration.yaml", sim.calibration)
    (out / "scenario.yaml").write_text(dump_scenario(sc), encoding="utf-8")
    (out / "world.ply").write_bytes(export_ply(sim.world.positions, labels=sim.world.classes))
    write_json(out / "world_ids.json", [int(i) for i in sim.world.ids])
    write_json(
        out / "reassociation.json",
        [{"start_ns": int(t), "emitted_to_true": {str(k): int(v) for k, v in sorted(m.items())}} for t, m in sim.reassociation],
    )
    outputs = ["log.jsonl", "ground_truth.txt", "calibration.yaml", "scenario.yaml", "world.ply", "world_ids.json", "reassociation.json"]
    write_manifest(out, "simulate", {}, {"scenario": dump_scenario(sc), "seed": sc.seed}, outputs)
    print(f"simulated {sc.name} (seed {sc.seed}) -> {out}")
    return 0


def cmd_solve(args) -> int:
    eff = _resolve(args, _load_config(args.config))
    sensor_log = load_log(args.log)
    cal = read_calibration(args.calibration)
    flags = {s: s not in eff["disable"] for s in SENSORS}
    if flags["vision"] and not any(flags[s] for s in ("imu", "dvl", "depth")) and len(cal.rig.cameras) < 2:
        raise InvalidSpec("vision-only runs need at least two cameras (no metric scale otherwise)")
    cfg = BuildConfig(
        keyframe_rate=float(eff["keyframe_rate"]),
        pixel_sigma=float(eff["pixel_sigma"]),
        huber_delta=float(eff["huber_delta"]) if eff["loss"] == "huber" else None,
        optimize_extrinsics=bool(eff["optimize_extrinsics"]),
        **flags,
    )
    opts = SolverOptions(lambda0=float(eff["lambda0"]), max_iterations=int(eff["max_iterations"]))
    out = output_dir(args.out, "solve")
    result = run_solve(sensor_log, cal, cfg, opts)
    write_trajectory(out / "trajectory.txt", result.trajectory)
    (out / "landmarks.ply").write_bytes(export_ply(result.landmarks))
    report = result.report.to_dict()
    report["sensors"] = flags
    report["keyframes"] = int(len(result.trajectory))
    report["landmarks"] = int(len(result.landmarks))
    report["association"] = result.problem.info["association"]
    if cfg.optimize_extrinsics:
        g = result.problem.graph
        report["extrinsics"] = {
            cam.camera_id: {"quaternion": [float(x) for x in g.values[k].rotation.quaternion], "translation": [float(x) for x in g.values[k].translation]}
            for cam, k in ((cam, C(p)) for p, cam in enumerate(g.rig.cameras))
        }
    write_json(out / "solve_report.json", report)
    write_manifest(
        out, "solve", {"log": args.log, "calibration": args.calibration}, eff, ["trajectory.txt", "landmarks.ply", "solve_report.json"]
    )
    print(f"solve: {result.report.termination}, {result.report.iterations} iterations, cost {result.report.initial_cost:.6g} -> {result.report.final_cost:.6g}")
    return 0


def cmd_eval(args) -> int:
    est = read_trajectory(args.estimate)
    ref = read_trajectory(args.reference)
    out = output_dir(args.out, "eval")
    m = metrics(est, ref, args.mode, args.delta)
    (out / "metrics.json").write_text(format_metrics(m), encoding="utf-8")
    outputs = ["metrics.json"]
    if args.per_pose:
        (out / "errors.csv").write_text(per_pose_csv(align(est, ref, args.mode)), encoding="utf-8")
        outputs.append("errors.csv")
    write_manifest(out, "eval", {"estimate": args.estimate, "reference": args.reference}, {"mode": args.mode, "delta": args.delta}, outputs)
    print(f"ATE {m['ate_rmse']:.6f} m ({args.mode}), endpoint {m['endpoint_error']:.6f} m")
    return 0


def cmd_semantics(args) -> int:
    world = cloud_from_ply(read_ply(Path(args.world).read_bytes()))
    pts, cls = world.points, world.classes
    traj = read_trajectory(args.trajectory)
    cal = read_calibration(args.calibration)
    out = output_dir(args.out, "semantics")
    clouds = []
    for pose in traj.poses[:: max(args.every, 1)]:
        for cam in cal.rig.cameras:
            T = pose @ cam.extrinsic
            depth, labels = render_oracle_maps(pts, cls, T, cam.intrinsics, args.stride, args.max_range)
            clouds.append(project_labels(T, cam.intrinsics, depth, labels, args.stride))
    fused = fuse(clouds, args.voxel) if clouds else LabeledPointCloud.empty()
    (out / "semantic.ply").write_bytes(export_ply(fused, binary=args.binary))
    rep = consistency_report(fused, pts, cls, args.radius)
    write_json(out / "consistency.json", rep.to_dict())
    config = {k: getattr(args, k) for k in ("every", "stride", "voxel", "max_range", "radius", "binary")}
    write_manifest(
        out, "semantics", {"world": args.world, "trajectory": args.trajectory, "calibration": args.calibration}, config, ["semantic.ply", "consistency.json"]
    )
    print(f"fused {len(fused)} labeled points from {len(clouds)} frames")
    return 0


def cmd_report(args) -> int:
    rows = []
    for run in args.runs:
        p = Path(run)
        mfile = p / "metrics.json" if p.is_dir() else p
        m = json.loads(mfile.read_text(encoding="utf-8"))
        rpe = m.get("rpe") or {}
        rows.append(
            {
                "run": str(run),
                "ate_rmse": m["ate_rmse"],
                "ate_max": m["ate_max"],
                "endpoint_error": m["endpoint_error"],
                "rpe_translation_rmse": rpe.get("translation_rmse"),
                "pairs": m["pairs"],
            }
        )
    out = output_dir(args.out, "report")
    cols = ["run", "ate_rmse", "ate_max", "endpoint_error", "rpe_translation_rmse", "pairs"]

    def cell(v):
        if v is None:
            return "-"
        return f"{v:.6f}" if isinstance(v, float) else str(v)

    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    lines += ["| " + " | ".join(cell(r[c]) for c in cols) + " |" for r in rows]
    (out / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(out / "report.json", rows)
    inputs = {f"run{i}": (Path(r) / "metrics.json" if Path(r).is_dir() else Path(r)) for i, r in enumerate(args.runs)}
    write_manifest(out, "report", inputs, {"runs": list(args.runs)}, ["report.md", "report.json"])
    print("\n".join(lines))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwslam", description="Underwater multi-sensor SLAM back-end: simulate, solve, evaluate.")
    p.add_argument("--version", action="version", version=f"uwslam {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a sensor log and ground truth from a scenario")
    s.add_argument("--scenario", required=True, help="preset name or scenario YAML file")
    s.add_argument("--seed", type=int, help="overrides the scenario seed")
    s.add_argument("--duration", type=float, help="overrides the survey duration, s")
    s.add_argument("--noiseless", action="store_true", help="zero all sensor noise")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="build and optimize the factor graph for a log")
    s.add_argument("--log", required=True)
    s.add_argument("--calibration", required=True)
    s.add_argument("--config", help="solve config YAML (overridden by flags)")
    s.add_argument("--disable", action="append", choices=SENSORS, help="drop a sensor's factors; repeatable")
    s.add_argument("--keyframe-rate", dest="keyframe_rate", type=float)
    s.add_argument("--pixel-sigma", dest="pixel_sigma", type=float)
    s.add_argument("--loss", choices=("huber", "none"))
    s.add_argument("--huber-delta", dest="huber_delta", type=float)
    s.add_argument("--lambda0", type=float)
    s.add_argument("--max-iterations", dest="max_iterations", type=int)
    s.add_argument("--optimize-extrinsics", dest="optimize_extrinsics", action="store_true", default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="ATE / RPE of an estimated trajectory against a reference")
    s.add_argument("--estimate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--mode", choices=("rigid", "similarity"), default="rigid")
    s.add_argument("--delta", type=float, default=1.0, help="RPE horizon, s")
    s.add_argument("--per-pose", dest="per_pose", action="store_true", help="also write errors.csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("semantics", help="project oracle label maps along a trajectory and fuse them")
    s.add_argument("--world", required=True, help="labeled landmark PLY")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--calibration", required=True)
    s.add_argument("--every", type=int, default=10, help="use every n-th pose")
    s.add_argument("--stride", type=int, default=4)
    s.add_argument("--voxel", type=float, default=0.05)
    s.add_argument("--max-range", dest="max_range", type=float, default=8.0)
    s.add_argument("--radius", type=float, default=0.2, help="matching radius for the consistency report")
    s.add_argument("--binary", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_semantics)

    s = sub.add_parser("report", help="tabulate metrics from several eval runs")
    s.add_argument("runs", nargs="+", help="eval output directories or metrics.json files")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        print("\n" + SCHEMA_HELP + "\n" + SOLVE_CONFIG_HELP, file=sys.stderr)
        return 1
    except (UwslamError, OSError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

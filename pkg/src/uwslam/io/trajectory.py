"""TUM-style trajectory text: ``t x y z qx qy qz qw`` per line, 9 decimals."""

from __future__ import annotations

import numpy as np

from ..exceptions import NonMonotonicTimestamps, ParseError
from ..geometry import Pose, PoseTrajectory, Rotation
from ..sensors import NS


def _fmt_time(t_ns: int) -> str:
    t_ns = int(t_ns)
    sign = "-" if t_ns < 0 else ""
    s, frac = divmod(abs(t_ns), NS)
    return f"{sign}{s}.{frac:09d}"


def _parse_time(tok: str) -> int:
    sign = -1 if tok.startswith("-") else 1
    tok = tok.lstrip("+-")
    whole, _, frac = tok.partition(".")
    frac = (frac + "000000000")[:9]
    return sign * (int(whole or "0") * NS + int(frac))


def format_trajectory(traj: PoseTrajectory) -> str:
    lines = []
    prev = None
    for t, p in zip(traj.times, traj.poses):
        if prev is not None and t <= prev:
            raise NonMonotonicTimestamps(f"trajectory time {t} does not increase")
        prev = t
        w, x, y, z = p.rotation.quaternion
        tx, ty, tz = p.translation
        lines.append(f"{_fmt_time(t)} {tx:.9f} {ty:.9f} {tz:.9f} {x:.9f} {y:.9f} {z:.9f} {w:.9f}")
    return "".join(line + "\n" for line in lines)


def parse_trajectory(text: str) -> PoseTrajectory:
    times, poses = [], []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 8:
            raise ParseError(f"expected 8 fields, got {len(tok)}", n)
        try:
            t = _parse_time(tok[0])
            x, y, z, qx, qy, qz, qw = (float(v) for v in tok[1:])
        except ValueError:
            raise ParseError("non-numeric field", n) from None
        q = np.array([qw, qx, qy, qz])
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ParseError(f"quaternion norm {np.linalg.norm(q):.9f} is not 1 within 1e-6", n)
        if times and t <= times[-1]:
            raise NonMonotonicTimestamps(f"line {n}: time does not increase")
        times.append(t)
        poses.append(Pose(Rotation(q), (x, y, z)))
    return PoseTrajectory(np.array(times, dtype=np.int64), tuple(poses))


def write_trajectory(path, traj: PoseTrajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trajectory(traj))


def read_trajectory(path) -> PoseTrajectory:
    with open(path, encoding="utf-8") as fh:
        return parse_trajectory(fh.read())

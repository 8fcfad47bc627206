"""Line-record sensor log: one JSON object per line, UTF-8.

The first line is a header ``{"format": "uwslam-log", "version": 1, "meta": {...}}``.
Every following line is a record with integer-nanosecond ``t`` and a ``type``
tag in ``imu | dvl | depth | camera``.
"""

from __future__ import annotations

import io as _io
import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from ..exceptions import NonMonotonicTimestamps, ParseError
from ..sensors import DepthSample, DvlSample, ImuSample

FORMAT = "uwslam-log"
VERSION = 1


class CameraRecord(NamedTuple):
    t: int
    camera_id: str
    observations: tuple  # ((track_id, u, v), ...)

    kind = "camera"


@dataclass
class SensorLog:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def of_kind(self, kind: str) -> list:
        return [r for r in self.records if r.kind == kind]

    def counts(self) -> dict[str, int]:
        out = {"imu": 0, "dvl": 0, "depth": 0, "camera": 0}
        for r in self.records:
            out[r.kind] += 1
        return out


def _floats(x) -> list[float]:
    return [float(v) for v in x]


def _encode(r) -> dict:
    kind = r.kind
    if kind == "imu":
        return {"t": int(r.t), "type": "imu", "gyro": _floats(r.gyro), "accel": _floats(r.accel)}
    if kind == "dvl":
        return {"t": int(r.t), "type": "dvl", "velocity": _floats(r.velocity), "valid": [bool(v) for v in r.valid]}
    if kind == "depth":
        return {"t": int(r.t), "type": "depth", "depth": float(r.depth)}
    if kind == "camera":
        obs = [[int(k), float(u), float(v)] for k, u, v in r.observations]
        return {"t": int(r.t), "type": "camera", "camera_id": str(r.camera_id), "obs": obs}
    raise TypeError(f"unknown record kind {kind!r}")


def _vec3(d, name, line):
    v = d.get(name)
    if not isinstance(v, list) or len(v) != 3:
        raise ParseError(f"field {name!r} must be a list of 3 numbers", line)
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ParseError(f"field {name!r} must be numeric", line) from None


def _decode(d, line):
    if not isinstance(d, dict):
        raise ParseError("record is not an object", line)
    if "t" not in d:
        raise ParseError("record is missing field 't'", line)
    t = d["t"]
    if isinstance(t, bool) or not isinstance(t, int) or t < 0:
        raise ParseError("field 't' must be a non-negative integer (nanoseconds)", line)
    kind = d.get("type")
    try:
        if kind == "imu":
            return ImuSample(t, _vec3(d, "gyro", line), _vec3(d, "accel", line))
        if kind == "dvl":
            valid = d.get("valid", [True, True, True])
            if not isinstance(valid, list) or len(valid) != 3 or not all(isinstance(v, bool) for v in valid):
                raise ParseError("field 'valid' must be 3 booleans", line)
            return DvlSample(t, _vec3(d, "velocity", line), tuple(valid))
        if kind == "depth":
            return DepthSample(t, float(d["depth"]))
        if kind == "camera":
            obs = tuple((int(k), float(u), float(v)) for k, u, v in d["obs"])
            return CameraRecord(t, str(d["camera_id"]), obs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed {kind} record ({exc})", line) from None
    raise ParseError(f"unknown record type {kind!r}", line)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_log(records: Iterable, meta: dict | None = None, stream=None) -> bytes:
    """Serialize records (time-sorted) to bytes; also written to ``stream`` when given."""
    if isinstance(records, SensorLog):
        meta = records.meta if meta is None else meta
        records = records.records
    lines = [_dumps({"format": FORMAT, "version": VERSION, "meta": meta or {}})]
    last = -1
    for r in records:
        if r.t < last:
            raise NonMonotonicTimestamps(f"record at t={r.t} follows t={last}")
        last = r.t
        lines.append(_dumps(_encode(r)))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    if stream is not None:
        stream.write(data)
    return data


def read_log(data) -> SensorLog:
    """Parse bytes, text, or a binary stream into a :class:`SensorLog`."""
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    records = []
    meta = {}
    last = -1
    seen_header = False
    for n, raw in enumerate(_io.StringIO(data), start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            d = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", n) from None
        if not seen_header:
            if not isinstance(d, dict) or d.get("format") != FORMAT:
                raise ParseError("missing log header", n)
            if d.get("version") != VERSION:
                raise ParseError(f"unsupported log version {d.get('version')!r}", n)
            meta = d.get("meta", {})
            seen_header = True
            continue
        r = _decode(d, n)
        if r.t < last:
            raise NonMonotonicTimestamps(f"line {n}: t={r.t} precedes t={last}")
        last = r.t
        records.append(r)
    if not seen_header:
        raise ParseError("empty stream (no header)", 1)
    return SensorLog(records, meta)


def save_log(path, log: SensorLog) -> None:
    with open(path, "wb") as fh:
        write_log(log.records, log.meta, fh)


def load_log(path) -> SensorLog:
    with open(path, "rb") as fh:
        return read_log(fh)

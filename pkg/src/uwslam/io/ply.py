"""PLY 1.0 export/import for labeled point clouds (ascii and binary_little_endian).

Vertex layout: ``float x, y, z; uchar red, green, blue; uchar label``.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import NonFinitePoint, ParseError
from ..semantics import LabeledPointCloud, class_colors

VERTEX_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1"), ("label", "u1")]
)

_PROPS = [("float", "x"), ("float", "y"), ("float", "z"), ("uchar", "red"), ("uchar", "green"), ("uchar", "blue"), ("uchar", "label")]


def _header(n: int, binary: bool) -> bytes:
    fmt = "binary_little_endian" if binary else "ascii"
    lines = ["ply", f"format {fmt} 1.0", "comment uwslam labeled point cloud", f"element vertex {n}"]
    lines += [f"property {t} {name}" for t, name in _PROPS]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def export_ply(points, colors=None, labels=None, binary: bool = False) -> bytes:
    """Serialize ``points (N,3)``, ``colors (N,3) uint8`` and ``labels (N,)``.

    ``points`` may also be a :class:`LabeledPointCloud`. Missing labels
    default to 0 and missing colors follow the semantic color map.
    """
    if isinstance(points, LabeledPointCloud):
        labels = points.classes if labels is None else labels
        points = points.points
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if labels is None:
        labels = np.zeros(len(pts), dtype=np.uint8)
    if colors is None:
        colors = class_colors(labels)
    if not np.all(np.isfinite(pts)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(pts), axis=1))[0])
        raise NonFinitePoint(f"point {bad} has a non-finite coordinate")
    n = len(pts)
    arr = np.empty(n, dtype=VERTEX_DTYPE)
    arr["x"], arr["y"], arr["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    col = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    arr["red"], arr["green"], arr["blue"] = col[:, 0], col[:, 1], col[:, 2]
    arr["label"] = np.asarray(labels, dtype=np.uint8).reshape(-1)
    head = _header(n, binary)
    if binary:
        return head + arr.tobytes()
    rows = [
        f"{repr(float(r['x']))} {repr(float(r['y']))} {repr(float(r['z']))} {r['red']} {r['green']} {r['blue']} {r['label']}"
        for r in arr
    ]
    return head + "".join(r + "\n" for r in rows).encode("ascii")


def read_ply(data: bytes) -> np.ndarray:
    """Parse a PLY written by :func:`export_ply` into a structured array."""
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise ParseError("not a PLY stream", 1)
    header = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]
    fmt = None
    n = None
    props = []
    for line in header:
        tok = line.split()
        if tok[:1] == ["format"]:
            fmt = tok[1]
        elif tok[:2] == ["element", "vertex"]:
            n = int(tok[2])
        elif tok[:1] == ["property"]:
            props.append((tok[1], tok[2]))
    if props != _PROPS or n is None:
        raise ParseError("unsupported vertex layout", 1)
    if fmt == "binary_little_endian":
        if len(body) != n * VERTEX_DTYPE.itemsize:
            raise ParseError(f"body holds {len(body)} bytes, expected {n * VERTEX_DTYPE.itemsize}", len(header) + 2)
        return np.frombuffer(body, dtype=VERTEX_DTYPE, count=n).copy()
    if fmt != "ascii":
        raise ParseError(f"unsupported format {fmt!r}", 2)
    rows = body.decode("ascii").split("\n")
    rows = [r for r in rows if r.strip()]
    if len(rows) != n:
        raise ParseError(f"header declares {n} vertices, body has {len(rows)}", len(header) + 2)
    arr = np.empty(n, dtype=VERTEX_DTYPE)
    for i, r in enumerate(rows):
        tok = r.split()
        arr[i] = (float(tok[0]), float(tok[1]), float(tok[2]), int(tok[3]), int(tok[4]), int(tok[5]), int(tok[6]))
    return arr


def cloud_from_ply(arr: np.ndarray) -> LabeledPointCloud:
    return LabeledPointCloud(np.column_stack((arr["x"], arr["y"], arr["z"])).astype(float), arr["label"])

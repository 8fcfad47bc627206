"""Flat binary grids for depth and label maps.

Text header, one ``key value`` per line, then raw little-endian row-major data::

    uwslam-grid 1
    width 1600
    height 1200
    dtype f4        # f4 (depth, meters after scaling) or u1 (labels)
    scale 1.0
    end_header
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ParseError

_DTYPES = {"f4": np.dtype("<f4"), "u1": np.dtype("u1"), "u2": np.dtype("<u2")}


def write_grid(grid, scale: float = 1.0) -> bytes:
    """Serialize a 2-D array; float grids are stored as ``grid / scale`` in float32."""
    g = np.asarray(grid)
    if g.ndim != 2:
        raise ValueError("grid must be 2-D")
    if np.issubdtype(g.dtype, np.floating):
        code, raw = "f4", (g / scale).astype("<f4")
    elif g.dtype == np.uint16:
        code, raw = "u2", g.astype("<u2")
    else:
        code, raw = "u1", g.astype("u1")
    h, w = g.shape
    head = f"uwslam-grid 1\nwidth {w}\nheight {h}\ndtype {code}\nscale {float(scale)!r}\nend_header\n"
    return head.encode("ascii") + raw.tobytes()


def read_grid(data: bytes) -> np.ndarray:
    """Parse a grid; float grids come back multiplied by their scale."""
    end = data.find(b"end_header\n")
    if not data.startswith(b"uwslam-grid 1\n") or end < 0:
        raise ParseError("not a uwslam grid", 1)
    fields = {}
    for n, line in enumerate(data[:end].decode("ascii").splitlines()[1:], start=2):
        key, _, val = line.partition(" ")
        fields[key] = val.strip()
    try:
        w, h = int(fields["width"]), int(fields["height"])
        dt = _DTYPES[fields["dtype"]]
        scale = float(fields.get("scale", "1.0"))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad grid header ({exc})", 1) from None
    body = data[end + len(b"end_header\n"):]
    if len(body) != w * h * dt.itemsize:
        raise ParseError(f"grid body holds {len(body)} bytes, expected {w * h * dt.itemsize}", 1)
    g = np.frombuffer(body, dtype=dt).reshape(h, w)
    if dt.kind == "f":
        return g.astype(float) * scale
    return g.copy()


def save_grid(path, grid, scale: float = 1.0) -> None:
    with open(path, "wb") as fh:
        fh.write(write_grid(grid, scale))


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_grid(fh.read())

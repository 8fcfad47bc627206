"""Landmark worlds built from labeled shape primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidSpec
from ..semantics import SemanticClass


@dataclass(frozen=True)
class Cluster:
    """Points sampled on a primitive.

    ``shape`` is one of:

    * ``box``: surface of an axis-aligned box, params ``center``, ``size``
    * ``plane``: horizontal rectangle, params ``center``, ``size`` (2 values)
    * ``ring``: horizontal annulus, params ``center``, ``inner``, ``outer``
    * ``cylinder``: surface of a segment, params ``start``, ``end``, ``radius``
    * ``posts``: vertical posts under a segment, params ``start``, ``end``, ``posts``, ``height``

    ``count`` may be omitted for ``plane``/``ring``, in which case the world's
    feature density (points per m^2) sets it.
    """

    shape: str
    semantic_class: int = int(SemanticClass.SEABED)
    count: int | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WorldSpec:
    clusters: tuple = ()
    density: float = 0.5  # points per m^2 for area clusters without a count


@dataclass
class LandmarkWorld:
    ids: np.ndarray  # int64
    positions: np.ndarray  # (N, 3)
    classes: np.ndarray  # (N,) uint8

    def __len__(self):
        return len(self.ids)

    def index_of(self, ids) -> np.ndarray:
        lookup = {int(i): n for n, i in enumerate(self.ids)}
        return np.array([lookup[int(i)] for i in ids], dtype=np.int64)


def _area(c: Cluster) -> float:
    p = c.params
    if c.shape == "plane":
        return float(p["size"][0] * p["size"][1])
    if c.shape == "ring":
        return math.pi * (p["outer"] ** 2 - p["inner"] ** 2)
    raise InvalidSpec(f"cluster shape {c.shape!r} needs an explicit count")


def _sample(c: Cluster, n: int, rng: np.random.Generator) -> np.ndarray:
    p = c.params
    if c.shape == "box":
        ctr = np.asarray(p["center"], dtype=float)
        size = np.asarray(p["size"], dtype=float)
        faces = np.array([size[1] * size[2], size[1] * size[2], size[0] * size[2], size[0] * size[2], size[0] * size[1], size[0] * size[1]])
        face = rng.choice(6, size=n, p=faces / faces.sum())
        u = rng.uniform(-0.5, 0.5, (n, 3)) * size
        axis = face // 2
        sign = np.where(face % 2 == 0, -0.5, 0.5)
        u[np.arange(n), axis] = sign * size[axis]
        return ctr + u
    if c.shape == "plane":
        ctr = np.asarray(p["center"], dtype=float)
        sx, sy = p["size"]
        u = np.column_stack((rng.uniform(-sx / 2, sx / 2, n), rng.uniform(-sy / 2, sy / 2, n), np.zeros(n)))
        return ctr + u
    if c.shape == "ring":
        ctr = np.asarray(p["center"], dtype=float)
        r = np.sqrt(rng.uniform(p["inner"] ** 2, p["outer"] ** 2, n))
        a = rng.uniform(0, 2 * math.pi, n)
        return ctr + np.column_stack((r * np.cos(a), r * np.sin(a), np.zeros(n)))
    if c.shape == "cylinder":
        a = np.asarray(p["start"], dtype=float)
        b = np.asarray(p["end"], dtype=float)
        axis = (b - a) / np.linalg.norm(b - a)
        ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(axis, ref)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        s = rng.uniform(0, 1, n)
        ang = rng.uniform(0, 2 * math.pi, n)
        rad = float(p["radius"])
        return a + s[:, None] * (b - a) + rad * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
    if c.shape == "posts":
        a = np.asarray(p["start"], dtype=float)
        b = np.asarray(p["end"], dtype=float)
        k = int(p["posts"])
        h = float(p["height"])
        which = rng.integers(0, k, n)
        base = a + (which / max(k - 1, 1))[:, None] * (b - a)
        jitter = rng.uniform(-0.1, 0.1, (n, 2))
        return base + np.column_stack((jitter, rng.uniform(0, h, n)))
    raise InvalidSpec(f"unknown cluster shape {c.shape!r}")


def generate_world(spec: WorldSpec, seed: int = 0) -> LandmarkWorld:
    rng = np.random.default_rng([int(seed), 1])
    pos, cls = [], []
    for c in spec.clusters:
        if int(c.semantic_class) not in {int(k) for k in SemanticClass}:
            raise InvalidSpec(f"unknown semantic class {c.semantic_class}")
        n = c.count if c.count is not None else int(round(spec.density * _area(c)))
        if n < 0:
            raise InvalidSpec("cluster count must be non-negative")
        pos.append(_sample(c, n, rng))
        cls.append(np.full(n, int(c.semantic_class), dtype=np.uint8))
    if not pos or sum(len(p) for p in pos) == 0:
        raise InvalidSpec("world must contain at least one landmark")
    positions = np.concatenate(pos)
    return LandmarkWorld(np.arange(len(positions), dtype=np.int64), positions, np.concatenate(cls))

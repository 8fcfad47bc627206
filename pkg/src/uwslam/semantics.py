"""Semantic label projection, voxel fusion, and label consistency scoring."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import DimensionMismatch, EmptyGroundTruth, UnknownClassId
from .geometry import CameraIntrinsics, Pose


class SemanticClass(IntEnum):
    SEABED = 0
    PIPELINE = 1
    PIPELINE_SUPPORT = 2


COLOR_MAP = {
    SemanticClass.SEABED: (0, 0, 255),
    SemanticClass.PIPELINE: (255, 255, 0),
    SemanticClass.PIPELINE_SUPPORT: (0, 255, 0),
}
_COLOR_TABLE = np.array([COLOR_MAP[c] for c in sorted(COLOR_MAP)], dtype=np.uint8)
N_CLASSES = len(SemanticClass)


def class_colors(classes) -> np.ndarray:
    classes = np.asarray(classes, dtype=np.int64)
    bad = (classes < 0) | (classes >= N_CLASSES)
    if np.any(bad):
        raise UnknownClassId(f"unknown class id {int(classes[bad][0])}")
    return _COLOR_TABLE[classes]


@dataclass
class LabeledPointCloud:
    points: np.ndarray  # (N, 3) world, m
    classes: np.ndarray  # (N,) uint8

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.classes = np.asarray(self.classes, dtype=np.uint8).reshape(-1)
        if len(self.points) != len(self.classes):
            raise DimensionMismatch("points and classes differ in length")
        class_colors(self.classes)

    def __len__(self):
        return len(self.points)

    @property
    def colors(self) -> np.ndarray:
        return class_colors(self.classes)

    @classmethod
    def empty(cls) -> LabeledPointCloud:
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))

    def transformed(self, T: Pose) -> LabeledPointCloud:
        return LabeledPointCloud(T.transform(self.points) if len(self) else self.points.copy(), self.classes.copy())


def sample_grid(width: int, height: int, stride: int):
    """Pixel coordinates sampled at ``stride``, starting at ``stride // 2``."""
    us = np.arange(stride // 2, width, stride)
    vs = np.arange(stride // 2, height, stride)
    return us, vs


def project_labels(pose: Pose, intrinsics: CameraIntrinsics, depth, labels, stride: int = 4) -> LabeledPointCloud:
    """Back-project every ``stride``-th pixel with positive depth into the world frame.

    ``pose`` maps camera coordinates to world coordinates; ``depth`` is measured
    along the optical axis.
    """
    depth = np.asarray(depth, dtype=float)
    labels = np.asarray(labels)
    if depth.shape != labels.shape or depth.ndim != 2:
        raise DimensionMismatch(f"depth {depth.shape} and label {labels.shape} maps must be equal 2-D grids")
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise DimensionMismatch(
            f"maps are {depth.shape[1]}x{depth.shape[0]}, camera is {intrinsics.width}x{intrinsics.height}"
        )
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if np.any(depth < 0):
        raise ValueError("depth must be non-negative")
    us, vs = sample_grid(intrinsics.width, intrinsics.height, stride)
    uu, vv = np.meshgrid(us, vs)
    d = depth[vv, uu]
    lab = labels[vv, uu].astype(np.int64)
    ok = d > 0
    if not np.any(ok):
        return LabeledPointCloud.empty()
    lab = lab[ok]
    class_colors(lab)
    pix = np.column_stack((uu[ok], vv[ok])).astype(float)
    xy = intrinsics.normalized(pix)
    pc = np.column_stack((xy * d[ok][:, None], d[ok]))
    return LabeledPointCloud(pose.transform(pc), lab)


def _pin_to_voxel(c: np.ndarray, vox: np.ndarray, size: float) -> np.ndarray:
    """Nudge centroid components that rounding pushed across their voxel boundary."""
    c = c.copy()
    for _ in range(8):
        got = np.floor(c / size).astype(np.int64)
        low = got < vox
        high = got > vox
        if not (low.any() or high.any()):
            break
        c[low] = np.nextafter(c[low], np.inf)
        c[high] = np.nextafter(c[high], -np.inf)
    return c


def fuse(clouds, voxel: float) -> LabeledPointCloud:
    """Voxel-grid downsample; one point per occupied voxel, majority class (ties to the lowest id)."""
    if not voxel > 0:
        raise ValueError("voxel size must be positive")
    clouds = [clouds] if isinstance(clouds, LabeledPointCloud) else list(clouds)
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return LabeledPointCloud.empty()
    pts = np.concatenate([c.points for c in clouds])
    cls = np.concatenate([c.classes for c in clouds]).astype(np.int64)
    vox = np.floor(pts / voxel).astype(np.int64)
    keys, inv = np.unique(vox, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    G = len(keys)
    count = np.bincount(inv, minlength=G).astype(float)
    cent = np.column_stack([np.bincount(inv, weights=pts[:, k], minlength=G) for k in range(3)]) / count[:, None]
    cent = _pin_to_voxel(cent, keys, voxel)
    votes = np.zeros((G, N_CLASSES), dtype=np.int64)
    np.add.at(votes, (inv, cls), 1)
    return LabeledPointCloud(cent, np.argmax(votes, axis=1).astype(np.uint8))


@dataclass
class ConsistencyReport:
    precision: dict  # class -> float (nan when the cloud has no point of that class)
    recall: dict  # class -> float (nan when the ground truth has no landmark of that class)
    confusion: np.ndarray  # (N_CLASSES, N_CLASSES + 1): rows predicted, columns true class, last = unmatched
    accuracy: float
    matched: int
    unmatched: int

    def to_dict(self) -> dict:
        def f(x):
            return None if np.isnan(x) else float(x)

        return {
            "precision": {SemanticClass(c).name: f(v) for c, v in self.precision.items()},
            "recall": {SemanticClass(c).name: f(v) for c, v in self.recall.items()},
            "confusion": self.confusion.tolist(),
            "accuracy": f(self.accuracy),
            "matched": self.matched,
            "unmatched": self.unmatched,
        }


def consistency_report(cloud: LabeledPointCloud, gt_points, gt_classes, radius: float = 0.2) -> ConsistencyReport:
    """Match each cloud point to its nearest ground-truth landmark within ``radius`` and score labels.

    Precision counts unmatched points as wrong. Recall is the fraction of
    ground-truth landmarks of a class reached by at least one correctly
    labeled point.
    """
    gt_points = np.asarray(gt_points, dtype=float).reshape(-1, 3)
    gt_classes = np.asarray(gt_classes, dtype=np.int64).reshape(-1)
    if len(gt_points) == 0:
        raise EmptyGroundTruth("no ground-truth landmarks to compare against")
    class_colors(gt_classes)
    conf = np.zeros((N_CLASSES, N_CLASSES + 1), dtype=np.int64)
    hit = np.zeros(len(gt_points), dtype=bool)
    if len(cloud):
        dist, idx = cKDTree(gt_points).query(cloud.points, k=1, distance_upper_bound=radius)
        ok = np.isfinite(dist)
        pred = cloud.classes.astype(np.int64)
        truth = np.where(ok, gt_classes[np.minimum(idx, len(gt_points) - 1)], N_CLASSES)
        np.add.at(conf, (pred, truth), 1)
        good = ok & (truth == pred)
        hit[idx[good]] = True
        matched = int(ok.sum())
        accuracy = float(good.sum() / len(cloud))
    else:
        matched = 0
        accuracy = float("nan")
    precision, recall = {}, {}
    for c in SemanticClass:
        n_pred = conf[c].sum()
        precision[c] = float(conf[c, c] / n_pred) if n_pred else float("nan")
        n_gt = int(np.count_nonzero(gt_classes == c))
        recall[c] = float(np.count_nonzero(hit & (gt_classes == c)) / n_gt) if n_gt else float("nan")
    return ConsistencyReport(precision, recall, conf, accuracy, matched, len(cloud) - matched)


def render_oracle_maps(points, classes, pose: Pose, intrinsics: CameraIntrinsics, stride: int = 4, max_range: float = np.inf):
    """Depth and label maps of a labeled point set seen from ``pose`` (camera to world).

    Each point fills the ``stride``-sized cell holding its projection with its
    own optical-axis depth, nearest point first, so a projection at that stride
    recovers it up to the in-cell offset.
    """
    W, H = intrinsics.width, intrinsics.height
    depth = np.zeros((H, W))
    labels = np.zeros((H, W), dtype=np.uint8)
    pc = pose.inverse().transform(np.asarray(points, dtype=float).reshape(-1, 3))
    z = pc[:, 2]
    front = (z > 1e-6) & (np.linalg.norm(pc, axis=1) <= max_range)
    if not np.any(front):
        return depth, labels
    xy = intrinsics.distort(pc[front, :2] / z[front, None])
    u = intrinsics.fx * xy[:, 0] + intrinsics.cx
    v = intrinsics.fy * xy[:, 1] + intrinsics.cy
    inside = (u >= 0) & (u < W) & (v >= 0) & (v < H)
    zf = z[front][inside]
    cf = np.asarray(classes)[front][inside]
    cu = (np.floor(u[inside]) // stride).astype(np.int64)
    cv = (np.floor(v[inside]) // stride).astype(np.int64)
    # farthest first so nearer points overwrite
    for k in np.argsort(-zf, kind="stable"):
        r0, c0 = cv[k] * stride, cu[k] * stride
        depth[r0:r0 + stride, c0:c0 + stride] = zf[k]
        labels[r0:r0 + stride, c0:c0 + stride] = cf[k]
    return depth, labels

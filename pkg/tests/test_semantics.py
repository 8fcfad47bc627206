import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_pose
from uwslam.exceptions import DimensionMismatch, EmptyGroundTruth, UnknownClassId
from uwslam.geometry import CameraIntrinsics, Pose
from uwslam.semantics import (
    COLOR_MAP,
    LabeledPointCloud,
    SemanticClass,
    consistency_report,
    fuse,
    project_labels,
    render_oracle_maps,
)

K = CameraIntrinsics(920.3, 920.3, 800.0, 600.0, 1600, 1200)
SMALL = CameraIntrinsics(50.0, 50.0, 32.0, 24.0, 64, 48)


def test_class_ids_and_colors():
    assert [int(c) for c in SemanticClass] == [0, 1, 2]
    assert COLOR_MAP[SemanticClass.SEABED] == (0, 0, 255)
    assert COLOR_MAP[SemanticClass.PIPELINE] == (255, 255, 0)
    assert COLOR_MAP[SemanticClass.PIPELINE_SUPPORT] == (0, 255, 0)


class TestProjectLabels:
    def test_principal_column(self):
        depth = np.full((1200, 1600), 2.0)
        labels = np.full((1200, 1600), int(SemanticClass.PIPELINE))
        cloud = project_labels(Pose.identity(), K, depth, labels, stride=1600)
        # one sample at u = 800 (the principal column), v = 800
        assert len(cloud) == 1
        assert np.allclose(cloud.points[0], (0.0, (800 - 600) / 920.3 * 2.0, 2.0), atol=1e-12)
        assert np.array_equal(cloud.colors, [[255, 255, 0]])

    def test_count_equals_valid_samples(self, rng):
        depth = rng.uniform(0.5, 5, (48, 64))
        depth[rng.random((48, 64)) < 0.3] = 0.0
        labels = rng.integers(0, 3, (48, 64))
        for stride in (1, 3, 4, 7):
            us = np.arange(stride // 2, 64, stride)
            vs = np.arange(stride // 2, 48, stride)
            expected = int(np.count_nonzero(depth[np.ix_(vs, us)] > 0))
            assert len(project_labels(Pose.identity(), SMALL, depth, labels, stride)) == expected

    def test_zero_depth(self):
        cloud = project_labels(Pose.identity(), SMALL, np.zeros((48, 64)), np.zeros((48, 64), int), 1)
        assert len(cloud) == 0

    def test_unknown_class(self):
        with pytest.raises(UnknownClassId):
            project_labels(Pose.identity(), SMALL, np.ones((48, 64)), np.full((48, 64), 7), 4)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            project_labels(Pose.identity(), SMALL, np.ones((48, 64)), np.zeros((47, 64), int), 4)

    def test_rigid_consistency(self, rng):
        depth = rng.uniform(0.5, 5, (48, 64))
        labels = rng.integers(0, 3, (48, 64))
        base = project_labels(Pose.identity(), SMALL, depth, labels, 2)
        for _ in range(20):
            T = random_pose(rng, 50.0)
            back = project_labels(T, SMALL, depth, labels, 2).transformed(T.inverse())
            assert np.max(np.abs(back.points - base.points)) <= 1e-9
            assert np.array_equal(back.classes, base.classes)

    def test_oracle_maps_recover_points(self, rng):
        pts = np.column_stack((rng.uniform(-1, 1, 30), rng.uniform(-1, 1, 30), rng.uniform(3, 4, 30)))
        cls = rng.integers(0, 3, 30)
        depth, labels = render_oracle_maps(pts, cls, Pose.identity(), SMALL, stride=1)
        cloud = project_labels(Pose.identity(), SMALL, depth, labels, 1)
        rep = consistency_report(cloud, pts, cls, radius=0.2)
        assert rep.accuracy == 1.0


class TestFuse:
    def test_single_point(self):
        c = LabeledPointCloud([[0.12, 0.34, 0.56]], [1])
        out = fuse([c], 0.5)
        assert np.array_equal(out.points, c.points) and np.array_equal(out.classes, c.classes)

    def test_unanimous(self):
        out = fuse([LabeledPointCloud([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3]], [1, 1])], 1.0)
        assert np.allclose(out.points, [[0.2, 0.2, 0.2]]) and out.classes.tolist() == [1]

    def test_tie_goes_to_lowest(self):
        out = fuse([LabeledPointCloud([[0.1, 0.1, 0.1]], [1]), LabeledPointCloud([[0.2, 0.2, 0.2]], [0])], 1.0)
        assert out.classes.tolist() == [0]
        assert np.array_equal(out.colors, [[0, 0, 255]])

    def test_majority(self):
        pts = np.full((5, 3), 0.5)
        out = fuse([LabeledPointCloud(pts, [2, 2, 1, 1, 2])], 1.0)
        assert out.classes.tolist() == [2]

    def test_empty(self):
        assert len(fuse([], 0.1)) == 0

    @given(arrays(float, (40, 3), elements=st.floats(-10, 10, allow_nan=False)),
           arrays(np.uint8, 40, elements=st.integers(0, 2)),
           st.sampled_from([0.05, 0.3, 1.0, 2.5]))
    def test_idempotent_and_histogram(self, pts, cls, voxel):
        once = fuse([LabeledPointCloud(pts, cls)], voxel)
        twice = fuse([once], voxel)
        assert np.array_equal(once.points, twice.points)
        assert np.array_equal(once.classes, twice.classes)
        assert set(once.classes.tolist()) <= set(cls.tolist())


class TestConsistency:
    def test_perfect(self, rng):
        pts = rng.uniform(-10, 10, (300, 3))
        cls = rng.integers(0, 3, 300)
        rep = consistency_report(LabeledPointCloud(pts, cls), pts, cls)
        assert all(v == 1.0 for v in rep.precision.values())
        assert all(v == 1.0 for v in rep.recall.values())

    def test_ten_percent_corrupted(self):
        rng = np.random.default_rng(21)
        n = 2000
        pts = rng.uniform(-20, 20, (n, 3))
        cls = rng.integers(0, 3, n)
        bad = rng.choice(n, n // 10, replace=False)
        noisy = cls.copy()
        noisy[bad] = (cls[bad] + rng.integers(1, 3, len(bad))) % 3
        rep = consistency_report(LabeledPointCloud(pts, noisy), pts, cls)
        assert rep.accuracy == pytest.approx(0.9, abs=3 * np.sqrt(0.09 / n))

    def test_empty_cloud(self, rng):
        pts = rng.uniform(-1, 1, (10, 3))
        rep = consistency_report(LabeledPointCloud.empty(), pts, np.zeros(10, int))
        assert rep.recall[SemanticClass.SEABED] == 0.0
        assert all(np.isnan(v) for v in rep.precision.values())

    def test_empty_ground_truth(self):
        with pytest.raises(EmptyGroundTruth):
            consistency_report(LabeledPointCloud.empty(), np.zeros((0, 3)), [])

    def test_far_points_unmatched(self):
        rep = consistency_report(LabeledPointCloud([[5.0, 0, 0]], [0]), [[0.0, 0, 0]], [0], radius=0.2)
        assert rep.unmatched == 1 and rep.precision[SemanticClass.SEABED] == 0.0

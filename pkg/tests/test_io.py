import io
import math

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st
from plyfile import PlyData

from conftest import random_pose
from uwslam.exceptions import NonFinitePoint, NonMonotonicTimestamps, NonOrthonormalRotation, ParseError, SchemaError
from uwslam.geometry import PoseTrajectory, Rotation, pixel_to_ray
from uwslam.io import (
    associate,
    dump_calibration,
    export_ply,
    format_trajectory,
    load_calibration,
    parse_trajectory,
    read_grid,
    read_log,
    read_ply,
    write_grid,
    write_log,
)
from uwslam.io.associate import nearest_state
from uwslam.io.ply import cloud_from_ply
from uwslam.io.scenario import dump_scenario, load_scenario
from uwslam.semantics import LabeledPointCloud
from uwslam.sensors import DepthSample, DvlSample, ImuSample
from uwslam.simulator import PRESETS, preset

MS = 1_000_000

CAM = """
  - id: {id}
    intrinsics: {{fx: 920.3, fy: 920.3, cx: 800, cy: 600, width: 1600, height: 1200}}
    extrinsic: {{translation: [0, 0, 0], tilt_deg: {tilt}}}
"""


def rig_yaml(tilts, ids=None):
    ids = ids or [f"cam{n}" for n in range(len(tilts))]
    return "cameras:" + "".join(CAM.format(id=i, tilt=t) for i, t in zip(ids, tilts))


class TestLog:
    def test_empty(self):
        data = write_log([])
        assert data.count(b"\n") == 1
        assert read_log(data).records == []

    def test_round_trip_10s(self, pipeline_sim_10s):
        log = pipeline_sim_10s.log
        counts = log.counts()
        n_cams = len(pipeline_sim_10s.calibration.rig.cameras)
        assert counts["imu"] == 5000 and counts["dvl"] == 70 and counts["camera"] == 300 * n_cams
        back = read_log(write_log(log))
        assert back.records == log.records
        assert back.meta == log.meta
        assert back.counts() == counts

    def test_writer_deterministic(self, pipeline_sim_10s):
        assert write_log(pipeline_sim_10s.log) == write_log(pipeline_sim_10s.log)

    def test_missing_t_names_line(self):
        data = write_log([ImuSample(0, (0, 0, 0), (0, 0, 9.81))]) + b'{"type":"depth","depth":3.0}\n'
        with pytest.raises(ParseError) as err:
            read_log(data)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_unsorted_rejected(self):
        recs = [DepthSample(5, 1.0), DepthSample(4, 1.0)]
        with pytest.raises(NonMonotonicTimestamps):
            write_log(recs)

    @given(st.lists(st.tuples(st.integers(0, 10**12), st.floats(-1e6, 1e6, allow_nan=False)), max_size=30))
    def test_round_trip_property(self, items):
        items.sort()
        recs = [DepthSample(t, d) if k % 2 else DvlSample(t, (d, -d, 0.5), (True, k % 3 == 0, True)) for k, (t, d) in enumerate(items)]
        assert read_log(write_log(recs)).records == recs


class TestAssociate:
    def test_tie_breaks_low(self):
        a = associate([DvlSample(50 * MS, (0, 0, 0))], [0, 100 * MS], 50 * MS)
        assert [i for i, _ in a.dvl] == [0]
        assert nearest_state(np.array([0, 100 * MS]), 50 * MS, 50 * MS) == 0

    def test_beyond_tolerance_unassociated(self):
        a = associate([DvlSample(180 * MS, (0, 0, 0)), DepthSample(180 * MS, 3.0)], [0, 100 * MS, 260 * MS], 50 * MS)
        assert a.dvl == [] and a.depth == []
        assert a.report["dvl_unassociated"] == 1 and a.report["depth_unassociated"] == 1

    def test_camera_needs_exact_time(self, pipeline_sim_10s):
        cams = pipeline_sim_10s.log.of_kind("camera")
        t = sorted({r.t for r in cams})[::10]
        a = associate(cams, t)
        assert a.report["camera_associated"] == sum(1 for r in cams if r.t in set(t))
        assert a.report["camera_associated"] + a.report["camera_unassociated"] == len(cams)

    def test_imu_partition(self, pipeline_sim_10s):
        imu = pipeline_sim_10s.log.of_kind("imu")
        # keyframe times between IMU ticks force interpolated boundary samples
        times = [int(t) for t in np.arange(1_000_000, 9_000_000_000, 333_333_333)]
        a = associate(imu, times)
        real = [s for b, f in zip(a.imu_batches, a.imu_synthetic) for s, syn in zip(b, f) if not syn]
        inside = [s for s in imu if times[0] <= s.t < times[-1]]
        assert real == inside
        r = a.report
        assert r["imu_synthetic"] == len(times) - 1
        assert r["imu_in"] + r["imu_synthetic"] - r["imu_out"] - r["imu_unassociated"] == 0
        for b, (t0, t1) in zip(a.imu_batches, zip(times, times[1:])):
            assert b[0].t == t0 and all(t0 <= s.t < t1 for s in b)

    def test_interpolated_boundary_value(self):
        imu = [ImuSample(0, (0, 0, 0), (0, 0, 0)), ImuSample(10, (1, 0, 0), (0, 2, 0)), ImuSample(20, (0, 0, 0), (0, 0, 0))]
        a = associate(imu, [5, 20])
        first = a.imu_batches[0][0]
        assert a.imu_synthetic[0][0] and first.t == 5
        assert first.gyro == (0.5, 0.0, 0.0) and first.accel == (0.0, 1.0, 0.0)

    @given(st.lists(st.integers(0, 2000), min_size=1, max_size=60, unique=True), st.lists(st.integers(0, 2000), min_size=2, max_size=8, unique=True))
    def test_imu_accounting_property(self, ts, states):
        imu = [ImuSample(t, (0, 0, 0), (0, 0, 0)) for t in sorted(ts)]
        r = associate(imu, sorted(states)).report
        assert r["imu_in"] + r["imu_synthetic"] - r["imu_out"] - r["imu_unassociated"] == 0


class TestCalibration:
    def test_tilted_rig(self):
        cal = load_calibration(rig_yaml([0, 30, 45]))
        for cam, tilt in zip(cal.rig.cameras, (0, 30, 45)):
            ray = pixel_to_ray(cal.rig, cam.camera_id, (800, 600))
            a = math.radians(tilt)
            # independent: body frame x forward, z down; pitch down by the tilt
            assert np.allclose(ray.direction, (math.cos(a), 0, math.sin(a)), atol=1e-12)

    def test_single_camera(self):
        doc = "cameras:\n  - id: solo\n    intrinsics: {fx: 500, fy: 500, cx: 320, cy: 240, width: 640, height: 480}\n"
        cal = load_calibration(doc)
        assert [c.camera_id for c in cal.rig.cameras] == ["solo"]
        assert np.allclose(cal.rig.cameras[0].extrinsic.matrix(), np.eye(4))
        assert np.allclose(cal.imu_extrinsic.matrix(), np.eye(4))

    def test_duplicate_id(self):
        with pytest.raises(SchemaError):
            load_calibration(rig_yaml([0, 30], ids=["a", "a"]))

    def test_missing_intrinsics_field(self):
        with pytest.raises(SchemaError):
            load_calibration("cameras:\n  - id: a\n    intrinsics: {fx: 1, width: 2, height: 2}\n")

    def test_small_drift_reorthonormalized(self, rng):
        R = Rotation.from_rotvec((0.1, 0.2, 0.3)).matrix + rng.normal(0, 1e-5, (3, 3))
        doc = {"cameras": [{"id": "a", "intrinsics": {"fx": 1, "fy": 1, "cx": 1, "cy": 1, "width": 2, "height": 2},
                            "extrinsic": {"rotation": R.tolist()}}]}
        got = load_calibration(yaml.safe_dump(doc)).rig.cameras[0].extrinsic.R
        assert np.allclose(got.T @ got, np.eye(3), atol=1e-12)
        assert np.max(np.abs(got - R)) <= 1e-4

    def test_large_drift_rejected(self):
        R = np.eye(3)
        R[0, 1] = 0.01
        doc = {"cameras": [{"id": "a", "intrinsics": {"fx": 1, "fy": 1, "cx": 1, "cy": 1, "width": 2, "height": 2},
                            "extrinsic": {"rotation": R.tolist()}}]}
        with pytest.raises(NonOrthonormalRotation):
            load_calibration(yaml.safe_dump(doc))

    def test_dump_round_trip(self):
        cal = load_calibration(rig_yaml([0, 30, 60]))
        text = dump_calibration(cal)
        again = load_calibration(text)
        assert dump_calibration(again) == text
        for a, b in zip(cal.rig.cameras, again.rig.cameras):
            assert np.allclose(a.extrinsic.matrix(), b.extrinsic.matrix(), atol=1e-15)


class TestTrajectory:
    def test_round_trip(self, rng):
        times = np.cumsum(rng.integers(1, 10**9, 200)).astype(np.int64)
        traj = PoseTrajectory(times, tuple(random_pose(rng, 100.0) for _ in times))
        text = format_trajectory(traj)
        back = parse_trajectory(text)
        assert np.array_equal(back.times, times)
        for a, b in zip(traj.poses, back.poses):
            assert np.max(np.abs(a.t - b.t)) <= 1e-9
            assert (a.rotation.inverse() @ b.rotation).angle() <= 1e-8

    def test_fixed_point_line(self):
        traj = PoseTrajectory(np.array([1_500_000_000]), (random_pose(np.random.default_rng(0)),))
        t, *rest = format_trajectory(traj).split()
        assert t == "1.500000000" and all(len(v.split(".")[1]) == 9 for v in rest)

    def test_rejects_bad_quaternion(self):
        with pytest.raises(ParseError):
            parse_trajectory("0.0 0 0 0 0 0 0 2\n")

    def test_rejects_non_increasing(self):
        with pytest.raises(NonMonotonicTimestamps):
            parse_trajectory("1.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n")


class TestPly:
    POINTS = np.array([[0.0, 1.0, 2.0], [-3.5, 4.25, 1e3], [0.1, 0.2, 0.3]])
    LABELS = np.array([0, 1, 2], dtype=np.uint8)

    def test_empty(self):
        for binary in (False, True):
            data = export_ply(np.zeros((0, 3)), binary=binary)
            assert b"element vertex 0\n" in data
            assert len(read_ply(data)) == 0
            assert PlyData.read(_stream(data))["vertex"].count == 0

    @pytest.mark.parametrize("binary", [False, True])
    def test_three_points_third_party(self, binary):
        cloud = LabeledPointCloud(self.POINTS, self.LABELS)
        data = export_ply(cloud, binary=binary)
        v = PlyData.read(_stream(data))["vertex"]
        xyz = np.column_stack((v["x"], v["y"], v["z"]))
        assert np.array_equal(xyz, self.POINTS.astype(np.float32))
        assert np.array_equal(v["label"], self.LABELS)
        assert np.array_equal(np.column_stack((v["red"], v["green"], v["blue"])), cloud.colors)
        mine = cloud_from_ply(read_ply(data))
        assert np.array_equal(mine.points, xyz.astype(float)) and np.array_equal(mine.classes, self.LABELS)

    def test_ascii_and_binary_agree(self):
        a = read_ply(export_ply(self.POINTS, labels=self.LABELS))
        b = read_ply(export_ply(self.POINTS, labels=self.LABELS, binary=True))
        assert a.tobytes() == b.tobytes()

    def test_non_finite(self):
        with pytest.raises(NonFinitePoint):
            export_ply(np.array([[0.0, np.nan, 1.0]]))

    def test_deterministic(self, rng):
        pts = rng.normal(size=(100, 3))
        for binary in (False, True):
            assert export_ply(pts, binary=binary) == export_ply(pts.copy(), binary=binary)

    def test_count_mismatch(self):
        data = export_ply(self.POINTS).replace(b"element vertex 3", b"element vertex 4")
        with pytest.raises(ParseError):
            read_ply(data)


def _stream(data):
    return io.BytesIO(data)


class TestGrid:
    def test_depth_round_trip(self, rng):
        g = rng.uniform(0, 20, (12, 16)).astype(np.float32).astype(float)
        assert np.array_equal(read_grid(write_grid(g)), g)

    def test_labels_round_trip(self, rng):
        g = rng.integers(0, 3, (7, 5)).astype(np.uint8)
        out = read_grid(write_grid(g))
        assert out.dtype == np.uint8 and np.array_equal(out, g)

    def test_truncated(self):
        with pytest.raises(ParseError):
            read_grid(write_grid(np.zeros((4, 4)))[:-1])


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_scenario_round_trip(name):
    sc = preset(name)
    text = dump_scenario(sc)
    back = load_scenario(text)
    assert back == sc
    assert dump_scenario(back) == text

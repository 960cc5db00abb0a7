import struct

import numpy as np
import pytest

from staticmap.config import DEFAULT_DYNAMIC_CLASSES
from staticmap.core import PointCloud, Pose
from staticmap.scan_io import (
    InvalidPoseError, ParseError, SequenceSource, read_calib_file, read_cloud, read_kitti_scan,
    read_label_file, read_pose_file, read_ply, write_cloud, write_kitti_scan, write_label_file,
    write_pose_file,
)


def test_read_hand_assembled_scan(tmp_path):
    path = tmp_path / "000000.bin"
    path.write_bytes(struct.pack("<4f", 1, 2, 3, 0.5) + struct.pack("<4f", 4, 5, 6, 0.1))
    cloud = read_kitti_scan(path)
    np.testing.assert_array_equal(cloud.xyz, [[1, 2, 3], [4, 5, 6]])
    np.testing.assert_array_equal(cloud.intensity, np.float32([0.5, 0.1]))


def test_empty_scan(tmp_path):
    path = tmp_path / "e.bin"
    path.write_bytes(b"")
    assert len(read_kitti_scan(path)) == 0


def test_truncated_scan_reports_offset(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"\0" * 17)
    with pytest.raises(ParseError, match="offset 16"):
        read_kitti_scan(path)


def test_missing_scan_is_io_error(tmp_path):
    with pytest.raises(OSError):
        read_kitti_scan(tmp_path / "nope.bin")


def test_pose_lines(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 5 0 1 0 0 0 0 1 0\n\n1 0 0 0 0 1 0 0 0 0 1 -2\n")
    poses = read_pose_file(path)
    assert [p.stamp for p in poses] == [0, 1, 2]
    np.testing.assert_array_equal(poses[0].matrix(), np.eye(4))
    np.testing.assert_array_equal(poses[1].translation, [5, 0, 0])
    np.testing.assert_array_equal(poses[2].translation, [0, 0, -2])


def test_pose_wrong_token_count(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1\n")
    with pytest.raises(ParseError, match=":2:"):
        read_pose_file(path)


def test_pose_near_orthonormal_is_snapped(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1.0002 0 0 0 0 1 0 0 0 0 0.9999 0\n")
    rot = read_pose_file(path)[0].rotation
    assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-12


def test_pose_far_from_orthonormal_rejected(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("1.1 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(InvalidPoseError):
        read_pose_file(path)


def test_pose_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    from tests.test_core import random_pose
    poses = [random_pose(rng, k) for k in range(5)]
    write_pose_file(poses, tmp_path / "p.txt")
    back = read_pose_file(tmp_path / "p.txt")
    for a, b in zip(poses, back):
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-15)


def test_calib_is_right_composed(tmp_path):
    (tmp_path / "poses.txt").write_text("1 0 0 10 0 1 0 0 0 0 1 0\n")
    (tmp_path / "calib.txt").write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nTr: 1 0 0 0 0 1 0 0 0 0 1 1.5\n")
    calib = read_calib_file(tmp_path / "calib.txt")
    pose = read_pose_file(tmp_path / "poses.txt", calib)[0]
    np.testing.assert_allclose(pose.apply([[0, 0, 0]]), [[10, 0, 1.5]])


def test_labels_attach_and_classify(tmp_path):
    path = tmp_path / "l.label"
    write_label_file([252, 40], path)
    cloud = read_label_file(path, PointCloud([[0, 0, 0], [1, 1, 1]]))
    assert cloud.labels.tolist() == [252, 40]
    assert [int(v) in DEFAULT_DYNAMIC_CLASSES for v in cloud.labels] == [True, False]


def test_label_upper_bits_masked(tmp_path):
    path = tmp_path / "l.label"
    path.write_bytes(struct.pack("<I", 0x00010009))
    assert read_label_file(path, PointCloud([[0, 0, 0]])).labels.tolist() == [9]


def test_label_empty_and_mismatch(tmp_path):
    path = tmp_path / "l.label"
    path.write_bytes(b"")
    assert len(read_label_file(path, PointCloud.empty())) == 0
    with pytest.raises(ParseError, match="expected 1 labels"):
        read_label_file(path, PointCloud([[0, 0, 0]]))


def test_kitti_bin_round_trip_float32(tmp_path):
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.uniform(-100, 100, (1000, 3)), intensity=rng.uniform(0, 1, 1000))
    write_cloud(cloud, tmp_path / "c.bin", "kitti-bin")
    back = read_kitti_scan(tmp_path / "c.bin")
    np.testing.assert_array_equal(back.xyz, cloud.xyz.astype(np.float32).astype(np.float64))
    ulp = np.spacing(np.abs(cloud.xyz).astype(np.float32)).astype(np.float64)
    assert (np.abs(back.xyz - cloud.xyz) <= ulp).all()


def test_ply_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    cloud = PointCloud(rng.normal(size=(200, 3)) * 1e3, labels=rng.integers(0, 300, 200))
    write_cloud(cloud, tmp_path / "c.ply")
    back = read_cloud(tmp_path / "c.ply")
    np.testing.assert_array_equal(back.xyz, cloud.xyz)
    np.testing.assert_array_equal(back.labels, cloud.labels)


def test_ply_empty_is_header_only(tmp_path):
    write_cloud(PointCloud.empty(), tmp_path / "e.ply", "ascii-ply")
    text = (tmp_path / "e.ply").read_text()
    assert text.startswith("ply\n") and text.rstrip().endswith("end_header")
    assert "element vertex 0" in text
    assert len(read_ply(tmp_path / "e.ply")) == 0


def test_ply_vertex_count_and_label_property(tmp_path):
    cloud = PointCloud(np.zeros((7, 3)), labels=np.full(7, 252))
    write_cloud(cloud, tmp_path / "l.ply")
    header = (tmp_path / "l.ply").read_text().split("end_header")[0]
    assert "element vertex 7" in header
    assert "property ushort label" in header
    unlabeled = tmp_path / "u.ply"
    write_cloud(PointCloud(np.zeros((2, 3))), unlabeled)
    assert "label" not in unlabeled.read_text()


def test_readers_are_deterministic(tmp_path):
    write_kitti_scan(PointCloud(np.arange(30.0).reshape(10, 3)), tmp_path / "a.bin")
    a, b = read_kitti_scan(tmp_path / "a.bin"), read_kitti_scan(tmp_path / "a.bin")
    assert a.xyz.tobytes() == b.xyz.tobytes()


def test_sequence_source_layout(tmp_path):
    seq = tmp_path / "seq"
    (seq / "velodyne").mkdir(parents=True)
    (seq / "labels").mkdir()
    for t in range(3):
        write_kitti_scan(PointCloud(np.full((2, 3), float(t))), seq / "velodyne" / f"{t:06d}.bin")
        write_label_file([40, 252], seq / "labels" / f"{t:06d}.label")
    write_pose_file([Pose(np.eye(3), [t, 0, 0], t) for t in range(3)], seq / "poses.txt")
    src = SequenceSource.from_dir(seq, frame_range=(1, 2))
    pairs = src.load()
    assert [p.stamp for _, p in pairs] == [1, 2]
    assert pairs[0][0].frame == "query/1"
    assert pairs[0][0].labels.tolist() == [40, 252]


def test_sequence_source_pose_coverage(tmp_path):
    seq = tmp_path / "seq"
    seq.mkdir()
    write_pose_file([Pose.identity(0)], seq / "poses.txt")
    with pytest.raises(ParseError, match="do not cover"):
        SequenceSource.from_dir(seq, frame_range=(0, 3)).poses()

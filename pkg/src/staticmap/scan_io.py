"""Readers and writers for KITTI scans, poses, SemanticKITTI labels and PLY."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PointCloud, Pose, compose_pose, orthonormalize, query_frame

SCAN_RECORD = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "<f4")])


class ParseError(ValueError):
    pass


class InvalidPoseError(ParseError):
    pass


def read_kitti_scan(path: str | Path) -> PointCloud:
    """Read a velodyne ``.bin`` file of little-endian float32 (x, y, z, intensity) records."""
    data = Path(path).read_bytes()
    if len(data) % SCAN_RECORD.itemsize:
        offset = len(data) - len(data) % SCAN_RECORD.itemsize
        raise ParseError(f"{path}: truncated record at byte offset {offset}")
    rec = np.frombuffer(data, dtype=SCAN_RECORD)
    xyz = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    return PointCloud(xyz, rec["intensity"].copy())


def write_kitti_scan(cloud: PointCloud, path: str | Path) -> None:
    rec = np.zeros(len(cloud), dtype=SCAN_RECORD)
    rec["x"], rec["y"], rec["z"] = cloud.xyz.T
    if cloud.intensity is not None:
        rec["intensity"] = cloud.intensity
    Path(path).write_bytes(rec.tobytes())


def read_pose_file(path: str | Path, calib: np.ndarray | None = None) -> list[Pose]:
    """Parse KITTI odometry poses: 12 row-major values of a 3x4 matrix per line.

    Rotations within 1e-3 of orthonormal are snapped onto SO(3); anything
    farther is rejected. ``calib`` (4x4 sensor-to-body) is right-composed
    onto every pose when given.
    """
    poses = []
    extra = None if calib is None else Pose.from_matrix(calib)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 12:
            raise ParseError(f"{path}:{lineno}: expected 12 values, got {len(tokens)}")
        try:
            m = np.array([float(t) for t in tokens]).reshape(3, 4)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        rot = m[:, :3]
        if not np.isfinite(m).all():
            raise InvalidPoseError(f"{path}:{lineno}: non-finite pose")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-3 or abs(np.linalg.det(rot) - 1) > 1e-3:
            raise InvalidPoseError(f"{path}:{lineno}: rotation is not orthonormal")
        pose = Pose(orthonormalize(rot), m[:, 3], len(poses))
        if extra is not None:
            pose = compose_pose(pose, extra)
        poses.append(pose)
    return poses


def write_pose_file(poses: list[Pose], path: str | Path) -> None:
    lines = []
    for pose in poses:
        m = pose.matrix()[:3]
        lines.append(" ".join(f"{v:.17g}" for v in m.reshape(-1)))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_calib_file(path: str | Path) -> np.ndarray:
    """Velodyne-to-camera ``Tr`` entry of a KITTI ``calib.txt`` as a 4x4 matrix."""
    for line in Path(path).read_text().splitlines():
        key, _, rest = line.partition(":")
        if key.strip() == "Tr":
            m = np.eye(4)
            m[:3] = np.array([float(t) for t in rest.split()]).reshape(3, 4)
            return m
    raise ParseError(f"{path}: no 'Tr' entry")


def read_label_file(path: str | Path, cloud: PointCloud) -> PointCloud:
    """Attach SemanticKITTI labels; only the lower 16 bits (semantic class) are kept."""
    data = Path(path).read_bytes()
    if len(data) != 4 * len(cloud):
        raise ParseError(
            f"{path}: expected {len(cloud)} labels ({4 * len(cloud)} bytes), "
            f"found {len(data) / 4:g} ({len(data)} bytes)"
        )
    raw = np.frombuffer(data, dtype="<u4")
    return cloud.with_labels((raw & 0xFFFF).astype(np.uint16))


def write_label_file(labels: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(np.asarray(labels, dtype="<u4").tobytes())


def write_ply(cloud: PointCloud, path: str | Path) -> None:
    cols = [cloud.xyz]
    props = ["property double x", "property double y", "property double z"]
    fmt = ["%.17g", "%.17g", "%.17g"]
    if cloud.intensity is not None:
        cols.append(cloud.intensity.astype(np.float64)[:, None])
        props.append("property float intensity")
        fmt.append("%.9g")
    if cloud.labels is not None:
        cols.append(cloud.labels.astype(np.float64)[:, None])
        props.append("property ushort label")
        fmt.append("%d")
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}", *props, "end_header"]
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        if len(cloud):
            np.savetxt(fh, np.hstack(cols), fmt=fmt)


def read_ply(path: str | Path) -> PointCloud:
    """Read the ASCII PLY files produced by :func:`write_ply`."""
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise ParseError(f"{path}: not a PLY file")
        count, props = None, []
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "format" and tokens[1] != "ascii":
                raise ParseError(f"{path}: only ASCII PLY is supported")
            if tokens[:2] == ["element", "vertex"]:
                count = int(tokens[2])
            elif tokens[0] == "property" and count is not None:
                props.append(tokens[-1])
            elif tokens[0] == "end_header":
                break
        if count is None or not {"x", "y", "z"} <= set(props):
            raise ParseError(f"{path}: missing vertex element or coordinates")
        body = np.loadtxt(fh, ndmin=2, max_rows=count) if count else np.zeros((0, len(props)))
    if body.shape != (count, len(props)):
        raise ParseError(f"{path}: expected {count} vertices with {len(props)} properties")
    col = {name: body[:, i] for i, name in enumerate(props)}
    xyz = np.stack([col["x"], col["y"], col["z"]], axis=1)
    labels = col["label"].astype(np.uint16) if "label" in col else None
    return PointCloud(xyz, col.get("intensity"), labels)


def write_cloud(cloud: PointCloud, path: str | Path, fmt: str | None = None) -> None:
    """Write ``cloud`` as ``ascii-ply`` or ``kitti-bin``; format defaults from the suffix."""
    fmt = fmt or ("kitti-bin" if str(path).endswith(".bin") else "ascii-ply")
    if fmt == "kitti-bin":
        write_kitti_scan(cloud, path)
    elif fmt == "ascii-ply":
        write_ply(cloud, path)
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")


def read_cloud(path: str | Path) -> PointCloud:
    return read_kitti_scan(path) if str(path).endswith(".bin") else read_ply(path)


@dataclass(frozen=True)
class SequenceSource:
    """A KITTI-layout sequence: ``velodyne/NNNNNN.bin``, optional ``labels/``, a pose file."""

    scan_dir: Path
    pose_file: Path
    label_dir: Path | None = None
    calib: np.ndarray | None = None
    frame_range: tuple[int, int] | None = None

    @classmethod
    def from_dir(cls, seq_dir: str | Path, pose_file: str | Path | None = None,
                 frame_range: tuple[int, int] | None = None, calib: np.ndarray | None = None,
                 label_dir: str | Path | None = None) -> SequenceSource:
        seq_dir = Path(seq_dir)
        scan_dir = seq_dir / "velodyne" if (seq_dir / "velodyne").is_dir() else seq_dir
        if label_dir is None and (seq_dir / "labels").is_dir():
            label_dir = seq_dir / "labels"
        pose_file = Path(pose_file) if pose_file is not None else seq_dir / "poses.txt"
        return cls(scan_dir, pose_file, None if label_dir is None else Path(label_dir), calib, frame_range)

    def frames(self) -> range:
        if self.frame_range is not None:
            return range(self.frame_range[0], self.frame_range[1] + 1)
        count = len(sorted(self.scan_dir.glob("*.bin")))
        return range(count)

    def poses(self) -> list[Pose]:
        poses = read_pose_file(self.pose_file, self.calib)
        frames = self.frames()
        if frames and frames[-1] >= len(poses):
            raise ParseError(
                f"{self.pose_file}: {len(poses)} poses do not cover frame {frames[-1]}"
            )
        return poses

    def scan_path(self, t: int) -> Path:
        return self.scan_dir / f"{t:06d}.bin"

    def read_scan(self, t: int) -> PointCloud:
        cloud = read_kitti_scan(self.scan_path(t))
        cloud = PointCloud(cloud.xyz, cloud.intensity, frame=query_frame(t))
        if self.label_dir is not None:
            cloud = read_label_file(self.label_dir / f"{t:06d}.label", cloud)
        return cloud

    def load(self) -> list[tuple[PointCloud, Pose]]:
        """All (scan, pose) pairs of the frame range; pose stamps are the frame indices."""
        poses = self.poses()
        out = []
        for t in self.frames():
            try:
                out.append((self.read_scan(t), poses[t]))
            except (OSError, ValueError) as exc:
                raise ParseError(f"frame {t}: {exc}") from exc
        return out

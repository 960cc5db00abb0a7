"""Point clouds, rigid poses and the transform algebra shared by every stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WORLD = "world"


def query_frame(stamp: int) -> str:
    return f"query/{stamp}"


class NonFiniteError(ValueError):
    """Raised when a coordinate is NaN or infinite."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def check_finite(xyz: np.ndarray) -> None:
    bad = ~np.isfinite(xyz).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteError(f"non-finite coordinate at point index {idx}: {xyz[idx].tolist()}")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered points stored column-wise.

    ``xyz`` is an (N, 3) float64 array. ``intensity`` and ``labels`` are
    optional per-point arrays; ``labels`` holds 16-bit semantic class ids.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    labels: np.ndarray | None = None
    frame: str = WORLD

    def __post_init__(self) -> None:
        xyz = np.array(self.xyz, dtype=np.float64).reshape(-1, 3)
        check_finite(xyz)
        object.__setattr__(self, "xyz", _frozen(xyz))
        n = len(xyz)
        if self.intensity is not None:
            inten = np.array(self.intensity, dtype=np.float32).reshape(-1)
            if len(inten) != n:
                raise ValueError(f"intensity length {len(inten)} != point count {n}")
            object.__setattr__(self, "intensity", _frozen(inten))
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.uint16).reshape(-1)
            if len(labels) != n:
                raise ValueError(f"labels length {len(labels)} != point count {n}")
            object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def empty(cls, labeled: bool = False, frame: str = WORLD) -> PointCloud:
        return cls(np.zeros((0, 3)), labels=np.zeros(0, np.uint16) if labeled else None, frame=frame)

    def select(self, index: np.ndarray) -> PointCloud:
        """Subset by integer indices or boolean mask, keeping per-point attributes."""
        return PointCloud(
            self.xyz[index],
            None if self.intensity is None else self.intensity[index],
            None if self.labels is None else self.labels[index],
            self.frame,
        )

    def with_labels(self, labels: np.ndarray) -> PointCloud:
        return PointCloud(self.xyz, self.intensity, labels, self.frame)

    @staticmethod
    def concatenate(clouds: list[PointCloud], frame: str = WORLD) -> PointCloud:
        if not clouds:
            return PointCloud.empty(frame=frame)
        xyz = np.concatenate([c.xyz for c in clouds])
        inten = None
        if all(c.intensity is not None for c in clouds):
            inten = np.concatenate([c.intensity for c in clouds])
        labels = None
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        return PointCloud(xyz, inten, labels, frame)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping points from a query (sensor) frame into the world."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stamp: int = 0

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise ValueError("pose contains non-finite values")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "translation", _frozen(trans))

    @classmethod
    def identity(cls, stamp: int = 0) -> Pose:
        return cls(np.eye(3), np.zeros(3), stamp)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, stamp: int = 0) -> Pose:
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3], stamp)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64) @ self.rotation.T + self.translation


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalize(rot: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense (polar decomposition)."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def transform_cloud(pose: Pose, cloud: PointCloud, frame: str | None = None) -> PointCloud:
    """Apply ``pose`` to every point; order, intensity and labels are kept."""
    check_finite(cloud.xyz)
    return PointCloud(
        pose.apply(cloud.xyz),
        cloud.intensity,
        cloud.labels,
        cloud.frame if frame is None else frame,
    )


def inverse_pose(pose: Pose) -> Pose:
    rt = pose.rotation.T
    return Pose(rt, -rt @ pose.translation, pose.stamp)


def compose_pose(a: Pose, b: Pose) -> Pose:
    """Pose equivalent to applying ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation, a.stamp)

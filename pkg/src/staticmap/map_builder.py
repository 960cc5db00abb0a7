"""Raw map accumulation and planar radius queries for submap extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud, Pose, inverse_pose, query_frame


@dataclass(eq=False)
class RawMap:
    """World-frame map with the source frame of every point and an x-y index.

    ``alive`` marks points still in the map. Removed points stay in ``cloud``
    (indices are stable) but are never returned by queries.
    """

    cloud: PointCloud
    provenance: np.ndarray
    alive: np.ndarray = field(default=None)
    _tree: cKDTree | None = field(default=None, repr=False)
    _tree_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if len(self.provenance) != len(self.cloud):
            raise ValueError("provenance length must equal map size")
        if self.alive is None:
            self.alive = np.ones(len(self.cloud), dtype=bool)
        self.rebuild_index()

    def __len__(self) -> int:
        return len(self.cloud)

    def rebuild_index(self) -> None:
        ids = np.flatnonzero(self.alive)
        self._tree_ids = ids
        self._tree = cKDTree(self.cloud.xyz[ids, :2]) if len(ids) else None

    def remove(self, indices: np.ndarray, rebuild: bool = True) -> None:
        self.alive[indices] = False
        if rebuild:
            self.rebuild_index()

    def radius_query(self, center_xy: np.ndarray, radius: float) -> np.ndarray:
        """Sorted map indices of live points within ``radius`` of ``center_xy`` in x-y."""
        if self._tree is None:
            return np.zeros(0, dtype=np.int64)
        hits = np.asarray(self._tree.query_ball_point(np.asarray(center_xy, dtype=np.float64)[:2], radius),
                          dtype=np.int64)
        ids = np.sort(self._tree_ids[hits])
        return ids[self.alive[ids]]

    def static_cloud(self) -> PointCloud:
        return self.cloud.select(self.alive)


def build_raw_map(scans, poses: list[Pose] | None = None) -> RawMap:
    """Concatenate every scan transformed into the world frame, in frame order.

    ``scans`` is a sequence of (cloud, pose) pairs, or of clouds when
    ``poses`` is passed separately.
    """
    if poses is not None:
        scans = list(scans)
        if len(scans) != len(poses):
            raise ValueError(f"{len(scans)} scans but {len(poses)} poses")
        scans = list(zip(scans, poses))
    xyz, inten, labels, prov = [], [], [], []
    for cloud, pose in scans:
        if not isinstance(pose, Pose):
            raise TypeError("each scan needs exactly one Pose")
        xyz.append(pose.apply(cloud.xyz))
        inten.append(cloud.intensity)
        labels.append(cloud.labels)
        prov.append(np.full(len(cloud), pose.stamp, dtype=np.int64))
    if not xyz:
        return RawMap(PointCloud.empty(), np.zeros(0, dtype=np.int64))
    cloud = PointCloud(
        np.concatenate(xyz),
        np.concatenate(inten) if all(i is not None for i in inten) else None,
        np.concatenate(labels) if all(lb is not None for lb in labels) else None,
    )
    return RawMap(cloud, np.concatenate(prov))


def extract_submap(raw: RawMap, center: Pose, radius: float) -> tuple[PointCloud, np.ndarray]:
    """Live map points within ``radius`` (x-y) of the pose, expressed in the query frame.

    Returns the transformed cloud and the map indices it came from.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    ids = raw.radius_query(center.translation, radius)
    xyz = inverse_pose(center).apply(raw.cloud.xyz[ids])
    labels = None if raw.cloud.labels is None else raw.cloud.labels[ids]
    return PointCloud(xyz, labels=labels, frame=query_frame(center.stamp)), ids

"""Voxel-wise Preservation Rate / Rejection Rate evaluation of a cleaned map."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .config import DEFAULT_DYNAMIC_CLASSES
from .core import PointCloud


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """One representative per occupied voxel.

    ``keys`` are the floored integer voxel coordinates (sorted
    lexicographically), ``points`` the member centroids and ``dynamic`` the
    majority label, ties counted as dynamic.
    """

    voxel_size: float
    keys: np.ndarray
    points: np.ndarray
    dynamic: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class EvalReport:
    pr: float
    rr: float
    f1: float
    preserved_static: int
    total_static: int
    preserved_dynamic: int
    total_dynamic: int
    voxel_size: float

    def table(self) -> str:
        return (f"{'PR [%]':>10} {'RR [%]':>10} {'F1':>7}\n"
                f"{100 * self.pr:10.3f} {100 * self.rr:10.3f} {self.f1:7.3f}")


def is_dynamic(labels: np.ndarray | None, n: int, dynamic_classes=DEFAULT_DYNAMIC_CLASSES) -> np.ndarray:
    if labels is None:
        raise ValueError("evaluation requires labelled clouds")
    classes = np.fromiter(sorted(dynamic_classes), dtype=np.int64)
    return np.isin(labels.astype(np.int64), classes)


def voxel_keys(xyz: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(xyz / voxel_size).astype(np.int64)


def voxelize(cloud: PointCloud, voxel_size: float, dynamic_classes=DEFAULT_DYNAMIC_CLASSES,
             dynamic: np.ndarray | None = None) -> VoxelGrid:
    """Group points by floored ``xyz / voxel_size``; a centroid and majority label per voxel."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be > 0")
    if dynamic is None:
        dynamic = is_dynamic(cloud.labels, len(cloud), dynamic_classes)
    if not len(cloud):
        return VoxelGrid(voxel_size, np.zeros((0, 3), np.int64), np.zeros((0, 3)), np.zeros(0, bool))
    keys, inverse, counts = np.unique(voxel_keys(cloud.xyz, voxel_size), axis=0,
                                      return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.stack([np.bincount(inverse, cloud.xyz[:, k], len(keys)) for k in range(3)], axis=1)
    n_dyn = np.bincount(inverse, dynamic.astype(np.float64), len(keys))
    return VoxelGrid(voxel_size, keys, sums / counts[:, None], 2 * n_dyn >= counts)


def _nearest_lowest_index(tree: cKDTree, queries: np.ndarray, n: int) -> np.ndarray:
    """Nearest neighbour per query, ties resolved to the lowest index."""
    k = min(4, n)
    dist, idx = tree.query(queries, k=k)
    if k == 1:
        return idx
    tied = dist == dist[:, :1]
    return np.where(tied, idx, n).min(axis=1)


def evaluate(raw: PointCloud, refined: PointCloud, voxel_size: float = 0.2,
             dynamic_classes=DEFAULT_DYNAMIC_CLASSES) -> EvalReport:
    """Preservation and rejection rates of ``refined`` against the labelled ``raw`` map.

    Each raw voxel representative ``q`` is matched to its nearest refined
    representative ``s``; ``q`` counts as preserved when both fall in the same
    voxel and agree on static/dynamic.
    """
    q = voxelize(raw, voxel_size, dynamic_classes)
    s = voxelize(refined, voxel_size, dynamic_classes)
    total_dynamic = int(q.dynamic.sum())
    total_static = len(q) - total_dynamic
    if len(s) == 0:
        preserved = np.zeros(len(q), dtype=bool)
    else:
        nn = _nearest_lowest_index(cKDTree(s.points), q.points, len(s))
        preserved = (q.keys == s.keys[nn]).all(axis=1) & (q.dynamic == s.dynamic[nn])
    preserved_static = int((preserved & ~q.dynamic).sum())
    preserved_dynamic = int((preserved & q.dynamic).sum())
    pr = preserved_static / total_static if total_static else 1.0
    rr = 1.0 - preserved_dynamic / total_dynamic if total_dynamic else 1.0
    f1 = 2 * pr * rr / (pr + rr) if pr + rr > 0 else 0.0
    if len(s) == 0:
        pr, rr = 0.0, 1.0
        f1 = 0.0
    return EvalReport(pr, rr, f1, preserved_static, total_static, preserved_dynamic, total_dynamic,
                      voxel_size)


def legacy_precision_recall(raw: PointCloud, refined: PointCloud, voxel_size: float = 0.2,
                            dynamic_classes=DEFAULT_DYNAMIC_CLASSES) -> tuple[float, float]:
    """Point-wise removal precision/recall. Not a primary metric.

    A raw point counts as removed when no refined point shares its voxel.
    """
    dyn = is_dynamic(raw.labels, len(raw), dynamic_classes)
    kept = np.unique(voxel_keys(refined.xyz, voxel_size), axis=0)
    keys = voxel_keys(raw.xyz, voxel_size)
    if len(kept):
        both = np.concatenate([kept, keys])
        _, inv = np.unique(both, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        removed = ~np.isin(inv[len(kept):], inv[:len(kept)])
    else:
        removed = np.ones(len(raw), dtype=bool)
    tp = int((removed & dyn).sum())
    precision = tp / removed.sum() if removed.any() else 0.0
    recall = tp / dyn.sum() if dyn.any() else 0.0
    return float(precision), float(recall)


def write_eval_report(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["voxel_size", "pr_percent", "rr_percent", "f1", "preserved_static",
                         "total_static", "preserved_dynamic", "total_dynamic"])
        writer.writerow([report.voxel_size, f"{100 * report.pr:.3f}", f"{100 * report.rr:.3f}",
                         f"{report.f1:.3f}", report.preserved_static, report.total_static,
                         report.preserved_dynamic, report.total_dynamic])

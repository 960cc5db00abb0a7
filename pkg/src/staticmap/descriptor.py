"""Volume of interest and the egocentric ring/sector pseudo-occupancy grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .core import PointCloud

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class BinIndex:
    """1-based (ring, sector) address of a bin."""

    ring: int
    sector: int


@dataclass(frozen=True)
class Bin:
    index: BinIndex
    members: np.ndarray
    z_min: float | None
    z_max: float | None

    @property
    def delta_h(self) -> float | None:
        if not len(self.members):
            return None
        return self.z_max - self.z_min


def voi_mask(xyz: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    rho = np.hypot(xyz[:, 0], xyz[:, 1])
    z = xyz[:, 2] + cfg.sensor_height
    return (rho < cfg.L_max) & (cfg.h_min < z) & (z < cfg.h_max)


def extract_voi(cloud: PointCloud, cfg: PipelineConfig) -> tuple[PointCloud, np.ndarray, np.ndarray]:
    """Keep points with planar range below ``L_max`` and height strictly in (h_min, h_max).

    Returns the VOI cloud, the indices kept and the complementary indices.
    """
    mask = voi_mask(cloud.xyz, cfg)
    return cloud.select(mask), np.flatnonzero(mask), np.flatnonzero(~mask)


def ring_sector(xyz: np.ndarray, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """0-based ring and sector of each (VOI-filtered) point.

    Bins are half-open: ring i covers [i*L/N_r, (i+1)*L/N_r) and sector j covers
    [j*2pi/N_theta - pi, (j+1)*2pi/N_theta - pi). The initial floor is corrected
    against those literal bounds so rounding never moves a point across an edge.
    """
    n_r, n_t, L = cfg.N_r, cfg.N_theta, cfg.L_max
    rho = np.hypot(xyz[:, 0], xyz[:, 1])
    theta = np.arctan2(xyz[:, 1], xyz[:, 0])

    ring = np.floor(rho * n_r / L).astype(np.int64)
    ring -= rho < ring * L / n_r
    ring += rho >= (ring + 1) * L / n_r
    np.clip(ring, 0, n_r - 1, out=ring)

    sector = np.floor((theta + np.pi) * n_t / TWO_PI).astype(np.int64)
    sector -= theta < sector * TWO_PI / n_t - np.pi
    sector += theta >= (sector + 1) * TWO_PI / n_t - np.pi
    # theta == pi falls past the last upper bound and wraps into the last sector
    np.clip(sector, 0, n_t - 1, out=sector)
    return ring, sector


def bin_of(point, cfg: PipelineConfig) -> BinIndex:
    ring, sector = ring_sector(np.asarray(point, dtype=np.float64)[:3].reshape(1, 3), cfg)
    return BinIndex(int(ring[0]) + 1, int(sector[0]) + 1)


@dataclass(frozen=True, eq=False)
class RPod:
    """Pseudo-occupancy grid over a VOI cloud.

    Arrays are indexed ``[ring, sector]`` (0-based). Empty bins have
    ``delta_h`` NaN, never 0.
    """

    n_rings: int
    n_sectors: int
    counts: np.ndarray
    z_min: np.ndarray
    z_max: np.ndarray
    point_bin: np.ndarray
    order: np.ndarray
    offsets: np.ndarray
    source: PointCloud

    @property
    def delta_h(self) -> np.ndarray:
        return self.z_max - self.z_min

    def flat(self, ring: int, sector: int) -> int:
        return ring * self.n_sectors + sector

    def members(self, flat_id: int) -> np.ndarray:
        """Indices into the source VOI cloud of the points in bin ``flat_id``."""
        return self.order[self.offsets[flat_id]:self.offsets[flat_id + 1]]

    def bin(self, index: BinIndex) -> Bin:
        r, s = index.ring - 1, index.sector - 1
        members = self.members(self.flat(r, s))
        if not len(members):
            return Bin(index, members, None, None)
        return Bin(index, members, float(self.z_min[r, s]), float(self.z_max[r, s]))


def build_rpod(voi: PointCloud, cfg: PipelineConfig) -> RPod:
    n_r, n_t = cfg.N_r, cfg.N_theta
    ring, sector = ring_sector(voi.xyz, cfg)
    point_bin = ring * n_t + sector
    n_bins = n_r * n_t

    order = np.argsort(point_bin, kind="stable")
    counts = np.bincount(point_bin, minlength=n_bins)
    offsets = np.zeros(n_bins + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    z_min = np.full(n_bins, np.nan)
    z_max = np.full(n_bins, np.nan)
    occupied = np.flatnonzero(counts)
    if len(occupied):
        z_sorted = voi.xyz[order, 2]
        starts = offsets[occupied]
        z_min[occupied] = np.minimum.reduceat(z_sorted, starts)
        z_max[occupied] = np.maximum.reduceat(z_sorted, starts)

    return RPod(
        n_r, n_t,
        counts.reshape(n_r, n_t), z_min.reshape(n_r, n_t), z_max.reshape(n_r, n_t),
        point_bin, order, offsets, voi,
    )

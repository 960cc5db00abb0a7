"""Scan ratio test: compare query and map pseudo occupancy bin by bin."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .descriptor import BinIndex, RPod


class BinClass(enum.IntEnum):
    SKIPPED = 0
    POTENTIALLY_DYNAMIC = 1
    DEFINITELY_STATIC = 2
    QUERY_ONLY_OCCUPIED = 3


@dataclass(frozen=True)
class BinVerdict:
    index: BinIndex
    cls: BinClass
    ratio: float | None


@dataclass(frozen=True, eq=False)
class SrtResult:
    """Per-bin classes and query/map ratios, shaped (N_r, N_theta). Skipped bins have NaN ratio."""

    classes: np.ndarray
    ratios: np.ndarray

    def __iter__(self):
        return iter(self.verdicts())

    def verdicts(self) -> list[BinVerdict]:
        out = []
        for (r, s), c in np.ndenumerate(self.classes):
            cls = BinClass(int(c))
            ratio = None if cls is BinClass.SKIPPED else float(self.ratios[r, s])
            out.append(BinVerdict(BinIndex(r + 1, s + 1), cls, ratio))
        return out

    def flat_ids(self, cls: BinClass) -> np.ndarray:
        return np.flatnonzero(self.classes.reshape(-1) == cls)

    def count(self, cls: BinClass) -> int:
        return int(np.count_nonzero(self.classes == cls))


def classify(dh_query, dh_map, n_query, n_map, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised verdicts for arrays of bin statistics."""
    dh_query = np.asarray(dh_query, dtype=np.float64)
    dh_map = np.asarray(dh_map, dtype=np.float64)
    min_pts = max(cfg.min_bin_points, 1)
    enough = (np.asarray(n_query) >= min_pts) & (np.asarray(n_map) >= min_pts)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dh_query / dh_map
        inverse = dh_map / dh_query
    both_flat = (dh_query == 0) & (dh_map == 0)
    ratio = np.where(both_flat, 1.0, ratio)
    inverse = np.where(both_flat | np.isinf(ratio), 1.0, inverse)

    thr = cfg.ratio_threshold
    classes = np.where(
        ratio < thr, BinClass.POTENTIALLY_DYNAMIC,
        np.where(inverse < thr, BinClass.QUERY_ONLY_OCCUPIED, BinClass.DEFINITELY_STATIC),
    ).astype(np.int8)
    classes[~enough] = BinClass.SKIPPED
    ratio = np.where(enough, ratio, np.nan)
    return classes, ratio


def scan_ratio_test(query: RPod, map_: RPod, cfg: PipelineConfig) -> SrtResult:
    """Classify every bin pair.

    A bin is potentially dynamic when its query occupancy collapsed relative to
    the map (query/map below the threshold), i.e. something that stood there
    in the map is gone now. The reverse case only flags regions already clean
    in the map and is never modified.
    """
    if query.counts.shape != map_.counts.shape:
        raise ValueError(f"grid shape mismatch: {query.counts.shape} vs {map_.counts.shape}")
    classes, ratios = classify(query.delta_h, map_.delta_h, query.counts, map_.counts, cfg)
    return SrtResult(classes, ratios)

"""Per-frame dynamic point removal over a posed scan sequence."""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .core import PointCloud, Pose
from .descriptor import RPod, build_rpod, voi_mask
from .map_builder import RawMap, build_raw_map, extract_submap
from .rgpf import BinSplit, rgpf_bin
from .scan_io import SequenceSource
from .srt import BinClass, SrtResult, scan_ratio_test

log = logging.getLogger(__name__)

REPORT_FIELDS = ("stamp", "bins_total", "bins_potentially_dynamic", "bins_skipped",
                 "points_removed", "wall_time")


@dataclass(frozen=True)
class FrameReport:
    stamp: int
    bins_total: int
    bins_potentially_dynamic: int
    bins_skipped: int
    points_removed: int
    wall_time: float

    def row(self) -> list:
        return [self.stamp, self.bins_total, self.bins_potentially_dynamic, self.bins_skipped,
                self.points_removed, f"{self.wall_time:.6f}"]


@dataclass(eq=False)
class FrameAnalysis:
    """Intermediate products of one frame, up to and including the scan ratio test."""

    stamp: int
    submap_ids: np.ndarray
    submap: PointCloud
    map_voi: np.ndarray
    query_voi: np.ndarray
    map_rpod: RPod
    query_rpod: RPod
    srt: SrtResult

    def bin_map_ids(self, flat_id: int) -> np.ndarray:
        """Raw-map indices of the map points in one bin."""
        return self.submap_ids[self.map_voi[self.map_rpod.members(flat_id)]]

    def bin_map_points(self, flat_id: int) -> np.ndarray:
        """Query-frame coordinates of the map points in one bin."""
        return self.map_rpod.source.xyz[self.map_rpod.members(flat_id)]


@dataclass(eq=False)
class RefinedMap:
    raw: RawMap
    static_ids: np.ndarray
    removed_ids: np.ndarray
    removed_stamp: np.ndarray
    per_frame: list[FrameReport] = field(default_factory=list)

    @property
    def static_cloud(self) -> PointCloud:
        return self.raw.cloud.select(self.static_ids)

    @property
    def removed_cloud(self) -> PointCloud:
        return self.raw.cloud.select(self.removed_ids)


def _check_stamp(query: PointCloud, pose: Pose) -> None:
    if query.frame.startswith("query/") and int(query.frame.split("/", 1)[1]) != pose.stamp:
        raise ValueError(f"query frame {query.frame!r} does not match pose stamp {pose.stamp}")


def analyze_frame(raw: RawMap, query: PointCloud, pose: Pose, cfg: PipelineConfig) -> FrameAnalysis:
    _check_stamp(query, pose)
    submap, submap_ids = extract_submap(raw, pose, cfg.search_radius)
    map_voi = np.flatnonzero(voi_mask(submap.xyz, cfg))
    query_voi = np.flatnonzero(voi_mask(query.xyz, cfg))
    map_rpod = build_rpod(PointCloud(submap.xyz[map_voi], frame=submap.frame), cfg)
    query_rpod = build_rpod(PointCloud(query.xyz[query_voi], frame=submap.frame), cfg)
    srt = scan_ratio_test(query_rpod, map_rpod, cfg)
    return FrameAnalysis(pose.stamp, submap_ids, submap, map_voi, query_voi, map_rpod, query_rpod, srt)


def _split_bins(analysis: FrameAnalysis, bins: np.ndarray, cfg: PipelineConfig,
                executor: ThreadPoolExecutor | None) -> list[BinSplit]:
    jobs = [analysis.bin_map_points(b) for b in bins]
    if executor is None or len(jobs) < 2:
        return [rgpf_bin(pts, cfg) for pts in jobs]
    return list(executor.map(lambda pts: rgpf_bin(pts, cfg), jobs))


def erase_frame(raw: RawMap, query: PointCloud, pose: Pose, cfg: PipelineConfig,
                executor: ThreadPoolExecutor | None = None) -> tuple[np.ndarray, FrameReport]:
    """Map indices judged dynamic from one query scan, plus the frame's report.

    Only map points of potentially dynamic bins inside the VOI can be
    selected; query points are never added to the map.
    """
    start = time.perf_counter()
    analysis = analyze_frame(raw, query, pose, cfg)
    bins = analysis.srt.flat_ids(BinClass.POTENTIALLY_DYNAMIC)
    splits = _split_bins(analysis, bins, cfg, executor)
    removed = [analysis.bin_map_ids(b)[split.dynamic] for b, split in zip(bins, splits)]
    delta = np.sort(np.concatenate(removed)) if removed else np.zeros(0, dtype=np.int64)
    report = FrameReport(
        stamp=pose.stamp,
        bins_total=cfg.N_r * cfg.N_theta,
        bins_potentially_dynamic=len(bins),
        bins_skipped=analysis.srt.count(BinClass.SKIPPED),
        points_removed=len(delta),
        wall_time=time.perf_counter() - start,
    )
    return delta, report


def run_scans(scans: list[tuple[PointCloud, Pose]], cfg: PipelineConfig, *,
              independent_frames: bool = False, threads: int | None = None) -> RefinedMap:
    """Build the raw map from ``scans`` and erase dynamic points frame by frame.

    By default each frame's removals are applied before the next frame is
    judged. With ``independent_frames`` every frame is judged against the raw
    map and the removals are unioned at the end.
    """
    raw = build_raw_map(scans)
    removed_stamp = np.full(len(raw), -1, dtype=np.int64)
    reports = []
    threads = threads or os.cpu_count() or 1
    executor = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for k, (query, pose) in enumerate(scans):
            delta, report = erase_frame(raw, query, pose, cfg, executor)
            reports.append(report)
            fresh = delta[removed_stamp[delta] < 0]
            removed_stamp[fresh] = pose.stamp
            log.info("frame %d: %d bins selected, %d points removed",
                     pose.stamp, report.bins_potentially_dynamic, report.points_removed)
            if not independent_frames:
                rebuild = (k + 1) % cfg.rebuild_every == 0
                raw.remove(delta, rebuild=rebuild)
    finally:
        if executor is not None:
            executor.shutdown()
    removed = removed_stamp >= 0
    raw.alive[:] = ~removed
    raw.rebuild_index()
    return RefinedMap(raw, np.flatnonzero(~removed), np.flatnonzero(removed),
                      removed_stamp[removed], reports)


def run_sequence(source: SequenceSource, cfg: PipelineConfig, **kwargs) -> RefinedMap:
    return run_scans(source.load(), cfg, **kwargs)


def write_frame_report(reports: list[FrameReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_FIELDS)
        for r in reports:
            writer.writerow(r.row())


@dataclass(frozen=True)
class GroundFitCounts:
    """Ground-selection accounting over the potentially dynamic bins of one frame.

    ``static_total``/``dynamic_total`` count labelled points in those bins;
    the ``*_ground`` fields count how many of each a method kept as ground.
    """

    stamp: int
    static_total: int
    dynamic_total: int
    regional_static_ground: int
    regional_dynamic_ground: int
    global_static_ground: int
    global_dynamic_ground: int


def compare_ground_fits(scans: list[tuple[PointCloud, Pose]], cfg: PipelineConfig) -> list[GroundFitCounts]:
    """Per-bin fitting vs one plane over all selected bins, frame by frame.

    Both run on the same selected bins; the map evolves with the per-bin
    result, as in :func:`run_scans`.
    """
    from .metrics import is_dynamic
    from .rgpf import fit_ground_global

    raw = build_raw_map(scans)
    dyn = is_dynamic(raw.cloud.labels, len(raw), cfg.dynamic_classes)
    rows = []
    for query, pose in scans:
        analysis = analyze_frame(raw, query, pose, cfg)
        bins = analysis.srt.flat_ids(BinClass.POTENTIALLY_DYNAMIC)
        ids = [analysis.bin_map_ids(b) for b in bins]
        splits = _split_bins(analysis, bins, cfg, None)
        all_ids = np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64)
        regional = np.concatenate([i[s.ground] for i, s in zip(ids, splits)]) if ids else all_ids
        removed = np.concatenate([i[s.dynamic] for i, s in zip(ids, splits)]) if ids else all_ids
        points = np.concatenate([analysis.bin_map_points(b) for b in bins]) if ids else np.zeros((0, 3))
        g_ground, _ = fit_ground_global(points, cfg)
        global_ids = all_ids[g_ground]
        rows.append(GroundFitCounts(
            pose.stamp,
            int((~dyn[all_ids]).sum()), int(dyn[all_ids].sum()),
            int((~dyn[regional]).sum()), int(dyn[regional].sum()),
            int((~dyn[global_ids]).sum()), int(dyn[global_ids].sum()),
        ))
        raw.remove(removed)
    return rows

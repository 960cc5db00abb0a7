import numpy as np
import pytest

from staticmap.config import PipelineConfig
from staticmap.core import PointCloud, query_frame
from staticmap.descriptor import bin_of
from staticmap.map_builder import build_raw_map
from staticmap.metrics import is_dynamic
from staticmap.pipeline import analyze_frame, compare_ground_fits, erase_frame, run_scans, write_frame_report
from staticmap.srt import BinClass
from staticmap.synth import (
    MOVING_CAR, Actor, Box, EgoSpec, SceneSpec, generate_sequence, static_scene,
)

CFG = PipelineConfig()


def departed_car(frames=2):
    car = Actor(Box(12, 0, 0, 4.5, 1.8, 0.3, 1.6, MOVING_CAR), (200.0, 0.0))
    wall = Box(30, 0, 0, 0.4, 30, -1, 4)
    return generate_sequence(SceneSpec(static_props=(wall,), actors=(car,), ego=EgoSpec(dx=0.0),
                                       frames=frames))


def test_static_frame_empty_delta():
    seq = generate_sequence(SceneSpec(static_props=(Box(20, 0, 0, 1, 20, -1, 3),),
                                      ego=EgoSpec(dx=0.0), frames=3))
    raw = build_raw_map(seq.pairs())
    for query, pose in seq.pairs():
        delta, report = erase_frame(raw, query, pose, CFG)
        assert len(delta) == 0 and report.points_removed == 0


def test_static_moving_scene_loses_little():
    refined = run_scans(generate_sequence(static_scene()).pairs(), CFG, threads=1)
    assert len(refined.removed_ids) <= 1e-3 * len(refined.raw)


def test_departed_vehicle_removed():
    seq = departed_car()
    raw = build_raw_map(seq.pairs())
    query, pose = seq.pairs()[1]
    delta, report = erase_frame(raw, query, pose, CFG)
    car = np.flatnonzero(raw.cloud.labels == MOVING_CAR)
    assert len(car) > 50
    assert np.isin(car, delta).mean() >= 0.99
    assert report.bins_potentially_dynamic >= 1 and report.points_removed == len(delta)
    assert report.bins_total == CFG.N_r * CFG.N_theta


def test_sparse_query_bins_are_skipped():
    seq = departed_car()
    raw = build_raw_map(seq.pairs())
    query, pose = seq.pairs()[1]
    car_bins = {bin_of(p, CFG) for p in raw.cloud.xyz[raw.cloud.labels == MOVING_CAR]}
    in_car_bins = np.array([bin_of(p, CFG) in car_bins for p in query.xyz])
    keep = ~in_car_bins
    keep[np.flatnonzero(in_car_bins)[::50]] = True
    sparse = query.select(keep)
    analysis = analyze_frame(raw, sparse, pose, CFG)
    verdicts = {v.index: v.cls for v in analysis.srt}
    assert all(verdicts[b] is BinClass.SKIPPED for b in car_bins if analysis.query_rpod.bin(b).members.size < 10)
    delta, _ = erase_frame(raw, sparse, pose, CFG)
    skipped = [b for b in car_bins if verdicts[b] is BinClass.SKIPPED]
    assert skipped
    assert not any(bin_of(p, CFG) in skipped for p in raw.cloud.xyz[delta])


def test_stamp_mismatch():
    seq = departed_car()
    raw = build_raw_map(seq.pairs())
    query, _ = seq.pairs()[1]
    with pytest.raises(ValueError, match="stamp"):
        erase_frame(raw, query, seq.poses[0], CFG)


def test_one_frame_sequence_keeps_everything():
    seq = departed_car(frames=1)
    refined = run_scans(seq.pairs(), CFG, threads=1)
    assert len(refined.removed_ids) == 0
    assert len(refined.static_ids) == len(seq.scans[0])


def test_conservation(benchmark_refined):
    r = benchmark_refined
    n = len(r.raw)
    assert len(np.intersect1d(r.static_ids, r.removed_ids)) == 0
    assert len(r.static_ids) + len(r.removed_ids) == n
    assert len(r.static_cloud) + len(r.removed_cloud) == n
    assert sum(f.points_removed for f in r.per_frame) == len(r.removed_ids)
    assert set(np.unique(r.removed_stamp).tolist()) <= set(range(10))


def test_query_points_never_enter_map(benchmark_seq, benchmark_refined):
    assert len(benchmark_refined.raw) == sum(len(s) for s in benchmark_seq.scans)


def test_determinism_across_threads(benchmark_seq, benchmark_refined):
    other = run_scans(benchmark_seq.pairs(), CFG, threads=4)
    np.testing.assert_array_equal(other.static_ids, benchmark_refined.static_ids)
    np.testing.assert_array_equal(other.removed_stamp, benchmark_refined.removed_stamp)


def test_rebuild_period_does_not_change_result(benchmark_seq, benchmark_refined):
    lazy = run_scans(benchmark_seq.pairs(), CFG.replace(rebuild_every=4), threads=1)
    np.testing.assert_array_equal(lazy.static_ids, benchmark_refined.static_ids)


def test_independent_frames_mode(benchmark_seq, benchmark_refined):
    indep = run_scans(benchmark_seq.pairs(), CFG, independent_frames=True, threads=1)
    raw = indep.raw
    dyn = is_dynamic(raw.cloud.labels, len(raw))
    assert np.isin(np.flatnonzero(dyn), indep.removed_ids).mean() >= 0.95
    assert len(indep.static_ids) + len(indep.removed_ids) == len(raw)


def test_second_pass_removes_little(benchmark_seq, benchmark_refined):
    first = benchmark_refined
    cleaned = first.raw.alive.copy()
    raw = build_raw_map(benchmark_seq.pairs())
    raw.remove(np.flatnonzero(~cleaned))
    removed = 0
    for query, pose in benchmark_seq.pairs():
        delta, _ = erase_frame(raw, query, pose, CFG)
        raw.remove(delta)
        removed += len(delta)
    assert removed <= 0.01 * len(first.removed_ids)


def test_frame_report_csv(tmp_path, benchmark_refined):
    path = tmp_path / "r.csv"
    write_frame_report(benchmark_refined.per_frame, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "stamp,bins_total,bins_potentially_dynamic,bins_skipped,points_removed,wall_time"
    assert len(lines) == 11


def test_compare_ground_fits_on_flat_scene():
    rows = compare_ground_fits(departed_car().pairs(), CFG)
    assert len(rows) == 2
    for r in rows:
        assert r.regional_static_ground <= r.static_total
        assert r.global_dynamic_ground <= r.dynamic_total


def test_query_frame_tag():
    assert query_frame(7) == "query/7"
    assert PointCloud.empty().frame == "world"

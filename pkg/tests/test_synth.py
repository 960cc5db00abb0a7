import math

import numpy as np
import pytest

from staticmap.config import DEFAULT_DYNAMIC_CLASSES
from staticmap.map_builder import build_raw_map
from staticmap.synth import (
    MOVING_BUS, MOVING_CAR, Actor, Box, EgoSpec, GroundPatch, SceneSpec, SensorSpec, benchmark_scene,
    cast, curbed_scene, generate_sequence, ramp, write_sequence,
)
from staticmap.scan_io import SequenceSource

SMALL = SensorSpec(beams=8, azimuth_res=4.0, range_noise=0.0)


def dynamic_count(scan):
    return int(np.isin(scan.labels, sorted(DEFAULT_DYNAMIC_CLASSES)).sum())


def test_no_actors_no_dynamic_points():
    seq = generate_sequence(SceneSpec(static_props=(Box(20, 0, 0, 1, 10, 0, 3),), sensor=SMALL, frames=3))
    assert all(dynamic_count(s) == 0 for s in seq.scans)
    assert all(len(s) > 0 for s in seq.scans)


def test_moving_box_present_then_gone():
    car = Actor(Box(10, 0, 0, 4, 2, 0.3, 1.6, MOVING_CAR), (50.0, 0.0))
    seq = generate_sequence(SceneSpec(actors=(car,), sensor=SensorSpec(range_noise=0.0),
                                      ego=EgoSpec(dx=0.0), frames=4))
    counts = [dynamic_count(s) for s in seq.scans]
    assert counts[0] > 0 and counts[1] > 0
    assert counts[2:] == [0, 0]


def test_fixed_seed_is_byte_identical():
    a, b = generate_sequence(benchmark_scene(3)), generate_sequence(benchmark_scene(3))
    for x, y in zip(a.scans, b.scans):
        assert x.xyz.tobytes() == y.xyz.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()
    c = generate_sequence(benchmark_scene(4))
    assert a.scans[0].xyz.tobytes() != c.scans[0].xyz.tobytes()


def test_spec_validation():
    benchmark_scene().validate()
    curbed_scene().validate()
    with pytest.raises(ValueError, match="degenerate"):
        generate_sequence(SceneSpec(sensor=SensorSpec(beams=0)))
    far = Actor(Box(500, 0, 0, 4, 2, 0, 1.5, MOVING_CAR), (0.0, 0.0))
    with pytest.raises(ValueError, match="range"):
        SceneSpec(actors=(far,)).validate()


def box_faces(box):
    """Exact per-face intersection oracle, independent of the slab test."""
    hx, hy = box.length / 2, box.width / 2
    for axis, value, bounds in (
        (0, -hx, ((1, -hy, hy), (2, box.z_min, box.z_max))),
        (0, hx, ((1, -hy, hy), (2, box.z_min, box.z_max))),
        (1, -hy, ((0, -hx, hx), (2, box.z_min, box.z_max))),
        (1, hy, ((0, -hx, hx), (2, box.z_min, box.z_max))),
        (2, box.z_min, ((0, -hx, hx), (1, -hy, hy))),
        (2, box.z_max, ((0, -hx, hx), (1, -hy, hy))),
    ):
        yield axis, value, bounds


def brute_first_hit(spec, frame, origin, d):
    hits = []
    if d[2] != 0:
        t = -origin[2] / d[2]
        p = origin + t * d
        if t > 1e-9 and not any(g.contains(p[0], p[1]) for g in spec.ground):
            hits.append(t)
    for g in spec.ground:
        n = np.array([-g.slope_x, -g.slope_y, 1.0])
        if d @ n != 0:
            t = (g.offset - origin @ n) / (d @ n)
            p = origin + t * d
            if t > 1e-9 and g.contains(p[0], p[1]):
                hits.append(t)
    boxes = list(spec.static_props) + [a.at(frame) for a in spec.actors]
    for box in boxes:
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        o = box.to_local(origin[None])[0]
        dl = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]])
        for axis, value, bounds in box_faces(box):
            if dl[axis] == 0:
                continue
            t = (value - o[axis]) / dl[axis]
            p = o + t * dl
            if t > 1e-9 and all(lo - 1e-9 <= p[ax] <= hi + 1e-9 for ax, lo, hi in bounds):
                hits.append(t)
    return min(hits) if hits else np.inf


def small_scene():
    return SceneSpec(
        ground=ramp(6.0, 12.0, 8.0),
        static_props=(Box(15, -4, 0.3, 2, 6, -1, 2.5), Box(-8, 0, 0, 1, 1, -1, 4)),
        actors=(Actor(Box(5, 3, 0.2, 4, 2, 0.3, 1.6, MOVING_CAR), (1.0, 0.0)),),
        sensor=SMALL, frames=2,
    )


def test_occlusion_first_surface_only():
    spec = small_scene()
    origin = np.array([0.0, 0.0, 1.73])
    dirs = spec.sensor.directions()
    dist, _, _ = cast(spec, 1, origin, dirs)
    for d, got in zip(dirs, dist):
        want = brute_first_hit(spec, 1, origin, d)
        if np.isinf(want):
            assert np.isinf(got)
        else:
            assert got == pytest.approx(want, abs=1e-9)


def test_dynamic_labels_lie_on_actor_surface():
    spec = small_scene()
    seq = generate_sequence(spec)
    for k, scan in enumerate(seq.scans):
        dyn = np.isin(scan.labels, (MOVING_CAR, MOVING_BUS))
        world = seq.poses[k].apply(scan.xyz[dyn])
        box = spec.actors[0].at(k)
        local = box.to_local(world)
        hx, hy = box.half
        lo = np.array([-hx, -hy, box.z_min])
        hi = np.array([hx, hy, box.z_max])
        assert ((local >= lo - 1e-6) & (local <= hi + 1e-6)).all()
        face_gap = np.minimum(np.abs(local - lo), np.abs(local - hi)).min(axis=1)
        assert (face_gap < 1e-6).all()


def test_benchmark_ghost_trails(benchmark_seq):
    raw = build_raw_map(benchmark_seq.pairs())
    for label in (MOVING_BUS, MOVING_CAR):
        frames = np.unique(raw.provenance[raw.cloud.labels == label])
        assert len(frames) >= 5
    assert 2e5 < len(raw) < 4e5


def test_written_sequence_reads_back(tmp_path):
    seq = generate_sequence(small_scene())
    out = write_sequence(seq, tmp_path / "seq")
    pairs = SequenceSource.from_dir(out).load()
    for (cloud, pose), scan, truth in zip(pairs, seq.scans, seq.poses):
        np.testing.assert_array_equal(cloud.xyz, scan.xyz.astype(np.float32))
        np.testing.assert_array_equal(cloud.labels, scan.labels)
        np.testing.assert_allclose(pose.matrix(), truth.matrix(), atol=1e-12)


def test_ground_patch_geometry():
    patch = GroundPatch(0, 10, 0, 10, slope_x=0.5, offset=1.0)
    assert patch.height(2.0, 3.0) == 2.0
    assert patch.contains(0.0, 0.0) and not patch.contains(10.0, 5.0)

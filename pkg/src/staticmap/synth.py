"""Deterministic ray-cast LiDAR sequences over analytic scenes, with ground-truth labels.

Scenes are built from planar ground patches and yaw-rotated boxes. Scans are
expressed in the vehicle base frame: origin on the ground below the sensor,
z up, so heights are measured from the local ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PointCloud, Pose, query_frame, yaw_rotation
from .scan_io import write_kitti_scan, write_label_file, write_pose_file

# SemanticKITTI ids used for synthetic surfaces
ROAD, SIDEWALK, BUILDING = 40, 48, 50
MOVING_CAR, MOVING_BUS = 252, 257

_EPS = 1e-9


@dataclass(frozen=True)
class GroundPatch:
    """Plane ``z = slope_x * x + slope_y * y + offset`` over an axis-aligned rectangle."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    slope_x: float = 0.0
    slope_y: float = 0.0
    offset: float = 0.0
    label: int = ROAD

    def height(self, x, y):
        return self.slope_x * x + self.slope_y * y + self.offset

    def contains(self, x, y):
        return (self.xmin <= x) & (x < self.xmax) & (self.ymin <= y) & (y < self.ymax)


@dataclass(frozen=True)
class Box:
    """Box of ``length`` x ``width`` (along its yawed x/y axes) spanning ``z_min``..``z_max``."""

    x: float
    y: float
    yaw: float
    length: float
    width: float
    z_min: float
    z_max: float
    label: int = BUILDING

    def moved(self, dx: float, dy: float) -> Box:
        return Box(self.x + dx, self.y + dy, self.yaw, self.length, self.width,
                   self.z_min, self.z_max, self.label)

    def to_local(self, xyz: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = xyz[..., 0] - self.x, xyz[..., 1] - self.y
        return np.stack([c * dx + s * dy, -s * dx + c * dy, xyz[..., 2]], axis=-1)

    @property
    def half(self) -> np.ndarray:
        return np.array([self.length / 2, self.width / 2])


@dataclass(frozen=True)
class Actor:
    """A moving box: ``box`` is its placement at frame 0, ``step`` the x-y displacement per frame."""

    box: Box
    step: tuple[float, float]

    def at(self, frame: int) -> Box:
        return self.box.moved(self.step[0] * frame, self.step[1] * frame)


@dataclass(frozen=True)
class SensorSpec:
    max_range: float = 90.0
    beams: int = 32
    fov_down: float = -25.0
    fov_up: float = 15.0
    azimuth_res: float = 0.4
    height: float = 1.73
    range_noise: float = 0.01

    def directions(self) -> np.ndarray:
        if self.beams < 1 or self.azimuth_res <= 0 or self.max_range <= 0 or self.fov_up < self.fov_down:
            raise ValueError("degenerate sensor spec")
        elev = np.deg2rad(np.linspace(self.fov_down, self.fov_up, self.beams))
        n_az = int(round(360.0 / self.azimuth_res))
        az = np.deg2rad(np.arange(n_az) * 360.0 / n_az - 180.0)
        el, a = np.meshgrid(elev, az, indexing="ij")
        return np.stack([np.cos(el) * np.cos(a), np.cos(el) * np.sin(a), np.sin(el)], -1).reshape(-1, 3)


@dataclass(frozen=True)
class EgoSpec:
    """Vehicle trajectory: start pose and constant per-frame increments."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    dx: float = 1.0
    dy: float = 0.0
    dyaw: float = 0.0

    def pose(self, frame: int) -> Pose:
        return Pose(yaw_rotation(self.yaw + self.dyaw * frame),
                    [self.x + self.dx * frame, self.y + self.dy * frame, 0.0], frame)


@dataclass(frozen=True)
class SceneSpec:
    ground: tuple[GroundPatch, ...] = ()
    static_props: tuple[Box, ...] = ()
    actors: tuple[Actor, ...] = ()
    sensor: SensorSpec = field(default_factory=SensorSpec)
    ego: EgoSpec = field(default_factory=EgoSpec)
    frames: int = 10
    seed: int = 0
    base_label: int = ROAD

    def validate(self) -> None:
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        self.sensor.directions()
        for k, actor in enumerate(self.actors):
            seen = False
            for t in range(self.frames):
                pose = self.ego.pose(t)
                box = actor.at(t)
                if math.hypot(box.x - pose.translation[0], box.y - pose.translation[1]) < self.sensor.max_range:
                    seen = True
                    break
            if not seen:
                raise ValueError(f"actor {k} never comes within sensor range")


@dataclass(eq=False)
class SyntheticSequence:
    scans: list[PointCloud]
    poses: list[Pose]

    @property
    def labels(self) -> list[np.ndarray]:
        return [s.labels for s in self.scans]

    def pairs(self) -> list[tuple[PointCloud, Pose]]:
        return list(zip(self.scans, self.poses))


def ground_height(spec: SceneSpec, x, y):
    """Terrain height at (x, y) ignoring boxes."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = np.zeros(np.broadcast(x, y).shape)
    for patch in spec.ground:
        inside = patch.contains(x, y)
        z = np.where(inside, patch.height(x, y), z)
    return z


def _hit_patch(patch: GroundPatch, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    normal = np.array([-patch.slope_x, -patch.slope_y, 1.0])
    denom = dirs @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (patch.offset - origin @ normal) / denom
    t = np.where(np.isfinite(t) & (t > _EPS), t, np.inf)
    hit = origin + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    return np.where(patch.contains(hit[:, 0], hit[:, 1]), t, np.inf)


def _hit_base(spec: SceneSpec, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[2] / dirs[:, 2]
    t = np.where(np.isfinite(t) & (t > _EPS), t, np.inf)
    hit = origin + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    covered = np.zeros(len(dirs), dtype=bool)
    for patch in spec.ground:
        covered |= patch.contains(hit[:, 0], hit[:, 1])
    return np.where(covered, np.inf, t)


def ray_box(box: Box, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Entry distance of each ray into ``box`` (slab test), inf on a miss."""
    o = box.to_local(origin[None, :])[0]
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = np.stack([c * dirs[:, 0] + s * dirs[:, 1], -s * dirs[:, 0] + c * dirs[:, 1], dirs[:, 2]], -1)
    lo = np.array([-box.length / 2, -box.width / 2, box.z_min])
    hi = np.array([box.length / 2, box.width / 2, box.z_max])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    t_near = np.nanmax(np.minimum(t1, t2), axis=1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    ok = (t_near <= t_far) & (t_near > _EPS)
    return np.where(ok, t_near, np.inf)


def cast(spec: SceneSpec, frame: int, origin: np.ndarray, dirs: np.ndarray,
         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First hit of every ray: (distance, label, is_dynamic). Misses have inf distance."""
    surfaces: list[tuple[np.ndarray, int, bool]] = [(_hit_base(spec, origin, dirs), spec.base_label, False)]
    for patch in spec.ground:
        surfaces.append((_hit_patch(patch, origin, dirs), patch.label, False))
    for box in spec.static_props:
        surfaces.append((ray_box(box, origin, dirs), box.label, False))
    for actor in spec.actors:
        box = actor.at(frame)
        surfaces.append((ray_box(box, origin, dirs), box.label, True))
    t = np.stack([s[0] for s in surfaces])
    first = np.argmin(t, axis=0)
    dist = t[first, np.arange(len(dirs))]
    labels = np.array([s[1] for s in surfaces], dtype=np.uint16)[first]
    dynamic = np.array([s[2] for s in surfaces])[first]
    return dist, labels, dynamic


def generate_sequence(spec: SceneSpec) -> SyntheticSequence:
    """Ray-cast every frame of ``spec``; points carry their surface's semantic label."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    local_dirs = spec.sensor.directions()
    scans, poses = [], []
    for k in range(spec.frames):
        pose = spec.ego.pose(k)
        origin = pose.apply(np.array([0.0, 0.0, spec.sensor.height]))
        dirs = local_dirs @ pose.rotation.T
        dist, labels, _ = cast(spec, k, origin, dirs)
        noise = rng.normal(0.0, spec.sensor.range_noise, len(dist)) if spec.sensor.range_noise > 0 else 0.0
        keep = dist <= spec.sensor.max_range
        dist = (dist + noise)[keep]
        world = origin + dist[:, None] * dirs[keep]
        local = (world - pose.translation) @ pose.rotation
        intensity = np.where(np.isin(labels[keep], (MOVING_CAR, MOVING_BUS)), 0.6, 0.3)
        scans.append(PointCloud(local, intensity, labels[keep], frame=query_frame(k)))
        poses.append(pose)
    return SyntheticSequence(scans, poses)


def write_sequence(seq: SyntheticSequence, out_dir: str | Path) -> Path:
    """Write ``velodyne/``, ``labels/`` and ``poses.txt`` in KITTI layout."""
    out = Path(out_dir)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(exist_ok=True)
    for k, scan in enumerate(seq.scans):
        write_kitti_scan(scan, out / "velodyne" / f"{k:06d}.bin")
        write_label_file(scan.labels, out / "labels" / f"{k:06d}.label")
    write_pose_file(seq.poses, out / "poses.txt")
    return out


def ramp(y0: float, y1: float, angle_deg: float, xmin: float = -200.0, xmax: float = 200.0,
         ) -> tuple[GroundPatch, GroundPatch]:
    """Incline rising along +y from ``y0`` to ``y1`` followed by a plateau."""
    g = math.tan(math.radians(angle_deg))
    return (
        GroundPatch(xmin, xmax, y0, y1, slope_y=g, offset=-g * y0),
        GroundPatch(xmin, xmax, y1, 200.0, offset=g * (y1 - y0)),
    )


def curb(y0: float, y1: float, step: float, xmin: float = -200.0, xmax: float = 200.0) -> Box:
    """Raised sidewalk slab between ``y0`` and ``y1``; its side is the curb face."""
    return Box((xmin + xmax) / 2, (y0 + y1) / 2, 0.0, xmax - xmin, y1 - y0, -1.0, step, SIDEWALK)


def benchmark_scene(seed: int = 0) -> SceneSpec:
    """Canonical stress scene.

    A raised sidewalk (curb) on one side, an 8 degree incline and plateau on
    the other, three walls, a 10 x 3 x 3 m bus overtaking the vehicle within
    a few metres, and an oncoming car.
    """
    incline = ramp(12.0, 24.0, 8.0)
    plateau_z = incline[1].offset
    walls = (
        Box(10.0, -12.0, 0.0, 80.0, 0.4, -1.0, 6.0),
        Box(10.0, 30.0, 0.0, 80.0, 0.4, plateau_z - 1.0, plateau_z + 5.0),
        Box(52.0, 0.0, 0.0, 0.4, 24.0, -1.0, 5.0),
    )
    bus = Actor(Box(-8.0, 3.5, 0.0, 10.0, 3.0, 0.3, 3.0, MOVING_BUS), (2.5, 0.0))
    car = Actor(Box(35.0, -3.0, 0.0, 4.5, 1.8, 0.3, 1.6, MOVING_CAR), (-2.5, 0.0))
    return SceneSpec(
        ground=incline,
        static_props=(curb(-9.0, -6.0, 0.2), *walls),
        actors=(bus, car),
        sensor=SensorSpec(),
        ego=EgoSpec(dx=1.0),
        frames=10,
        seed=seed,
    )


def curbed_scene(seed: int = 0) -> SceneSpec:
    """Two-level terrain with a 0.4 m curb and vehicles moving along both levels."""
    actors = (
        Actor(Box(-6.0, 3.0, 0.0, 4.5, 1.8, 0.3, 1.6, MOVING_CAR), (2.0, 0.0)),
        Actor(Box(25.0, -3.0, 0.0, 4.5, 1.8, 0.3, 1.6, MOVING_CAR), (-2.0, 0.0)),
        Actor(Box(-4.0, -8.0, 0.0, 2.0, 1.2, 0.7, 1.9, MOVING_CAR), (1.5, 0.0)),
        Actor(Box(18.0, -9.5, 0.0, 2.0, 1.2, 0.7, 1.9, MOVING_CAR), (-1.5, 0.0)),
    )
    return SceneSpec(
        static_props=(curb(-14.0, -6.0, 0.4), Box(10.0, -15.0, 0.0, 80.0, 0.4, -1.0, 6.0)),
        actors=actors,
        ego=EgoSpec(dx=1.0),
        frames=10,
        seed=seed,
    )


def static_scene(seed: int = 0) -> SceneSpec:
    base = benchmark_scene(seed)
    return SceneSpec(base.ground, base.static_props, (), base.sensor, base.ego, base.frames, seed)


SCENES = {"benchmark": benchmark_scene, "curbed": curbed_scene, "static": static_scene}

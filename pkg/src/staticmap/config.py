"""Pipeline parameters and the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

# SemanticKITTI moving-object classes treated as ground-truth dynamic.
DEFAULT_DYNAMIC_CLASSES = frozenset({252, 253, 254, 255, 256, 257, 259})


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    L_max: float = 80.0
    h_min: float = -1.0
    h_max: float = 3.0
    N_r: int = 20
    N_theta: int = 60
    ratio_threshold: float = 0.2
    min_bin_points: int = 10
    tau_seed: float = 0.5
    tau_g: float = 0.15
    num_rgpf_iterations: int = 3
    num_seed_points: int = 20
    voxel_size: float = 0.2
    dynamic_classes: frozenset[int] = DEFAULT_DYNAMIC_CLASSES
    # Ground fits tilted further than this (degrees) are replaced by a level plane.
    max_ground_tilt: float = 45.0
    # Neighbour-search radius for submap extraction; None means L_max.
    submap_radius: float | None = None
    # Added to query-frame z before the height test, for data whose origin is the sensor.
    sensor_height: float = 0.0
    # KD-index rebuild period in frames; removed points are tombstoned in between.
    rebuild_every: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "dynamic_classes", frozenset(int(c) for c in self.dynamic_classes))
        checks = [
            ("h_min", self.h_min < self.h_max, "h_min must be < h_max"),
            ("L_max", self.L_max > 0, "L_max must be > 0"),
            ("N_r", self.N_r >= 1, "N_r must be >= 1"),
            ("N_theta", self.N_theta >= 1, "N_theta must be >= 1"),
            ("ratio_threshold", 0 < self.ratio_threshold < 1, "ratio_threshold must be in (0, 1)"),
            ("tau_g", self.tau_g > 0, "tau_g must be > 0"),
            ("num_rgpf_iterations", self.num_rgpf_iterations >= 1, "num_rgpf_iterations must be >= 1"),
            ("min_bin_points", self.min_bin_points >= 0, "min_bin_points must be >= 0"),
            ("num_seed_points", self.num_seed_points >= 1, "num_seed_points must be >= 1"),
            ("tau_seed", self.tau_seed >= 0, "tau_seed must be >= 0"),
            ("voxel_size", self.voxel_size > 0, "voxel_size must be > 0"),
            ("max_ground_tilt", 0 < self.max_ground_tilt <= 90, "max_ground_tilt must be in (0, 90]"),
            ("rebuild_every", self.rebuild_every >= 1, "rebuild_every must be >= 1"),
        ]
        if self.submap_radius is not None:
            checks.append(("submap_radius", self.submap_radius > 0, "submap_radius must be > 0"))
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")
        if any(not 0 <= c <= 0xFFFF for c in self.dynamic_classes):
            raise ConfigError("dynamic_classes: ids must fit in 16 bits")

    @property
    def search_radius(self) -> float:
        return self.L_max if self.submap_radius is None else self.submap_radius

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_ALIASES = {"n_r": "N_r", "n_theta": "N_theta", "l_max": "L_max"}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    try:
        if name == "dynamic_classes":
            return frozenset(int(tok) for tok in raw.replace(",", " ").split())
        if name == "submap_radius":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return PipelineConfig(**values)


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if name == "dynamic_classes":
            value = ", ".join(str(c) for c in sorted(value))
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"

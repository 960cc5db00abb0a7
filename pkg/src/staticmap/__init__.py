"""Static point-cloud map building by egocentric pseudo-occupancy comparison.

Scans are accumulated into a world-frame map; each query scan is compared
against the surrounding map bin by bin, and bins whose occupancy collapsed
are cleaned by region-wise ground fitting.
"""

from .config import PipelineConfig, load_config
from .core import PointCloud, Pose, compose_pose, inverse_pose, transform_cloud
from .map_builder import RawMap, build_raw_map, extract_submap
from .metrics import EvalReport, evaluate, voxelize
from .pipeline import FrameReport, RefinedMap, erase_frame, run_scans, run_sequence

__all__ = [
    "EvalReport", "FrameReport", "PipelineConfig", "PointCloud", "Pose", "RawMap", "RefinedMap",
    "build_raw_map", "compose_pose", "erase_frame", "evaluate", "extract_submap", "inverse_pose",
    "load_config", "run_scans", "run_sequence", "transform_cloud", "voxelize",
]

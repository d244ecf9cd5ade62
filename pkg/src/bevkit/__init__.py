"""Roadside LiDAR BEV pipeline.

Rasterizes point-cloud sequences into occupancy grids, separates moving
objects from a frequency background, completes sparse foregrounds, tracks
objects, and reports oriented 3D boxes plus traffic statistics.
"""

from .background import (
    BackgroundModel,
    PccParams,
    complete_background,
    estimate_background,
    pcc,
    subtract,
)
from .bev import BevConfig, BevImage, rasterize
from .box3d import (
    Box3D,
    Footprint,
    HeightParams,
    build_box,
    median_smooth_dims,
    object_height,
    oriented_footprint,
)
from .config import PipelineConfig, config_from_dict, config_to_dict, load_config
from .errors import BevkitError
from .eval3d import EvalReport, GtAnnotation, evaluate, load_gt_jsonl
from .frames import Frame, SequenceMeta, load_sequence
from .groundmap import GroundHeightMap, GroundParams, build_ground_map
from .pipeline import run_pipeline
from .segment import BBox2D, ComponentSegmenter, Detection, ExternalSegmenter, nms
from .track import Track, TrackerParams, TrackFilterConfig, filter_tracks, run_tracker
from .traffic import ClassLabel, classify_track, track_kinematics

__version__ = "0.1.0"

__all__ = [
    "BackgroundModel",
    "BBox2D",
    "BevConfig",
    "BevImage",
    "BevkitError",
    "Box3D",
    "ClassLabel",
    "ComponentSegmenter",
    "Detection",
    "EvalReport",
    "ExternalSegmenter",
    "Footprint",
    "Frame",
    "GroundHeightMap",
    "GroundParams",
    "GtAnnotation",
    "HeightParams",
    "PccParams",
    "PipelineConfig",
    "SequenceMeta",
    "Track",
    "TrackerParams",
    "TrackFilterConfig",
    "build_box",
    "build_ground_map",
    "classify_track",
    "complete_background",
    "config_from_dict",
    "config_to_dict",
    "estimate_background",
    "evaluate",
    "filter_tracks",
    "load_config",
    "load_gt_jsonl",
    "load_sequence",
    "median_smooth_dims",
    "nms",
    "object_height",
    "oriented_footprint",
    "pcc",
    "rasterize",
    "run_pipeline",
    "run_tracker",
    "subtract",
    "track_kinematics",
    "__version__",
]

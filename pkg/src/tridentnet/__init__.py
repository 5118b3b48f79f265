"""Route-conditioned ego-centric trajectory generation.

Pipeline: OpenStreetMap XML -> road graph -> shortest-path plan rasters,
semantic map -> ego-centric scene rasters, pose logs -> arc-length-spaced
waypoint targets; a conditional variational autoencoder with a categorical
latent learns p(trajectory | plan, scene) and decodes the most probable mode
at inference time.
"""

from .geo import GeoPoint, RoadGraph, Route, nearest_node, parse_osm, project, shortest_path
from .raster import (
    PlanRaster,
    Pose2,
    SceneRaster,
    SemanticMap,
    extract_local_scene,
    rasterize_polyline,
    render_global_plan,
    waypoints_to_pixels,
)
from .dataset import (
    Manifest,
    PoseTrack,
    Sample,
    Trajectory,
    build_samples,
    gen_synthetic_world,
    load_pose_log,
    resample_arclength,
    split,
)
from .cvae import (
    CategoricalDist,
    CvaeModel,
    GaussianSeq,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
    train_model,
)
from .metrics import EvalReport, ade_full, ade_half, evaluate, fde, mde

__version__ = "0.1.0"

__all__ = [
    "GeoPoint", "RoadGraph", "Route", "parse_osm", "project", "nearest_node",
    "shortest_path",
    "Pose2", "PlanRaster", "SceneRaster", "SemanticMap", "rasterize_polyline",
    "render_global_plan", "extract_local_scene", "waypoints_to_pixels",
    "PoseTrack", "Trajectory", "Sample", "Manifest", "load_pose_log",
    "resample_arclength", "build_samples", "split", "gen_synthetic_world",
    "ModelConfig", "CvaeModel", "CategoricalDist", "GaussianSeq",
    "save_checkpoint", "load_checkpoint", "train_model",
    "EvalReport", "ade_full", "ade_half", "fde", "mde", "evaluate",
    "__version__",
]

"""Ego-centric bird's-eye-view rasters.

Two raster products share one pixel convention: the vehicle rear axle sits at
the image center, forward is up (decreasing row) and left is decreasing
column. The plan raster holds binary road/route channels rendered from the
road graph; the scene raster holds a one-hot semantic class image resampled
from a map-frame class grid.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import kernels
from .geo import RoadGraph, Route

PLAN_SIZE = 200
PLAN_RES = 0.5  # m/px
SCENE_SIZE = 400
SCENE_RES = 0.2  # m/px
ROAD_THICKNESS_PX = 3
ROUTE_THICKNESS_PX = 3

DEFAULT_CLASS_NAMES = ("unknown", "road", "crosswalk", "sidewalk", "lane_marking", "vegetation")

# RGB palette for class indices, cycled if a map declares more classes
CLASS_PALETTE = (
    (60, 60, 60),     # unknown
    (128, 128, 128),  # road
    (240, 220, 60),   # crosswalk
    (90, 140, 190),   # sidewalk
    (250, 250, 250),  # lane_marking
    (60, 160, 60),    # vegetation
    (200, 100, 40),
    (160, 60, 160),
)


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


@dataclass(frozen=True)
class Pose2:
    """SE(2) pose in the map frame; yaw is CCW from +x, normalized to (-pi, pi]."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    def to_map(self, pts: np.ndarray) -> np.ndarray:
        """Transform ego-frame points (N,2) or (2,) into the map frame."""
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out = np.empty_like(p)
        out[:, 0] = c * p[:, 0] - s * p[:, 1] + self.x
        out[:, 1] = s * p[:, 0] + c * p[:, 1] + self.y
        return out[0] if np.asarray(pts).ndim == 1 else out

    def to_ego(self, pts: np.ndarray) -> np.ndarray:
        """Transform map-frame points into this pose's ego frame."""
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = p[:, 0] - self.x
        dy = p[:, 1] - self.y
        out = np.empty_like(p)
        out[:, 0] = c * dx + s * dy
        out[:, 1] = -s * dx + c * dy
        return out[0] if np.asarray(pts).ndim == 1 else out


@dataclass
class PlanRaster:
    """Binary road/route channels, ego-centric."""

    roads: np.ndarray  # (H, W) uint8 in {0, 1}
    route: np.ndarray
    resolution: float = PLAN_RES


@dataclass
class SemanticMap:
    """Map-frame semantic class grid.

    class_grid[r, c] covers the map position (origin_xy[0] + c * resolution,
    origin_xy[1] + r * resolution); rows grow with +y, columns with +x.
    """

    class_grid: np.ndarray  # (H, W) int32
    resolution: float
    origin_xy: tuple[float, float]
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        self.class_grid = np.ascontiguousarray(self.class_grid, dtype=np.int32)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.class_grid.size and int(self.class_grid.max()) >= len(self.class_names):
            raise ValueError("class index out of range of class_names")

    def save(self, pgm_path: str | Path, meta_path: str | Path) -> None:
        write_pgm(pgm_path, self.class_grid.astype(np.uint8))
        meta = {
            "resolution_m_per_px": self.resolution,
            "origin_x_m": self.origin_xy[0],
            "origin_y_m": self.origin_xy[1],
            "class_names": list(self.class_names),
        }
        Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, pgm_path: str | Path, meta_path: str | Path) -> "SemanticMap":
        grid = read_pgm(pgm_path).astype(np.int32)
        meta = json.loads(Path(meta_path).read_text())
        return cls(
            class_grid=grid,
            resolution=float(meta["resolution_m_per_px"]),
            origin_xy=(float(meta["origin_x_m"]), float(meta["origin_y_m"])),
            class_names=tuple(meta["class_names"]),
        )


@dataclass
class SceneRaster:
    """One-hot semantic raster, ego-centric; channel k flags class k."""

    onehot: np.ndarray  # (C, H, W) uint8
    class_names: tuple[str, ...]
    resolution: float = SCENE_RES

    @property
    def classes(self) -> np.ndarray:
        return np.argmax(self.onehot, axis=0).astype(np.int32)


def rasterize_polyline(
    points: np.ndarray,
    width: int,
    height: int,
    resolution: float,
    thickness_px: int,
) -> np.ndarray:
    """Stamp a polyline of ego-frame points into a fresh binary grid.

    A pixel is set when its center lies within thickness_px * resolution / 2
    of the polyline. Deterministic; geometry outside the grid is clipped.
    """
    if thickness_px < 1:
        raise ValueError("thickness_px must be >= 1")
    grid = np.zeros((height, width), dtype=np.uint8)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts):
        kernels.mark_polyline(grid, resolution, pts, thickness_px * resolution / 2.0)
    return grid


def render_global_plan(
    g: RoadGraph,
    route: Route,
    ego: Pose2,
    size: int = PLAN_SIZE,
    resolution: float = PLAN_RES,
    thickness_px: int = ROAD_THICKNESS_PX,
) -> PlanRaster:
    """Render nearby graph edges and the routed edges around the ego pose.

    Both channels stamp each undirected edge with its endpoints in canonical
    (smaller node id first) order, so the route channel is a pixel subset of
    the roads channel by construction.
    """
    roads = np.zeros((size, size), dtype=np.uint8)
    route_grid = np.zeros((size, size), dtype=np.uint8)
    radius = thickness_px * resolution / 2.0
    # anything farther than the window semi-diagonal plus the stamp radius
    # cannot touch the raster
    reach = (size * resolution / 2.0) * math.sqrt(2.0) + radius + resolution

    def ego_segment(a: int, b: int) -> np.ndarray | None:
        pa = np.array(g.nodes[a])
        pb = np.array(g.nodes[b])
        ego_xy = np.array([ego.x, ego.y])
        d = pb - pa
        den = float(d @ d)
        t = 0.0 if den == 0.0 else min(1.0, max(0.0, float((ego_xy - pa) @ d) / den))
        if np.linalg.norm(pa + t * d - ego_xy) > reach:
            return None
        return ego.to_ego(np.stack([pa, pb]))

    for a in g.adj:
        for e in g.adj[a]:
            if a >= e.to:
                continue
            seg = ego_segment(a, e.to)
            if seg is not None:
                kernels.mark_polyline(roads, resolution, seg, radius)

    for a, b in zip(route.node_ids, route.node_ids[1:]):
        lo, hi = (a, b) if a < b else (b, a)
        seg = ego_segment(lo, hi)
        if seg is not None:
            kernels.mark_polyline(route_grid, resolution, seg, radius)

    return PlanRaster(roads=roads, route=route_grid, resolution=resolution)


def extract_local_scene(
    smap: SemanticMap,
    ego: Pose2,
    size: int = SCENE_SIZE,
    resolution: float = SCENE_RES,
) -> SceneRaster:
    """Resample the semantic map around the ego pose, nearest-neighbor.

    Pixels whose map-frame position falls outside the map get the "unknown"
    class. Output channels are one-hot over the map's class list.
    """
    fill = smap.class_names.index("unknown")
    classes = kernels.sample_nearest(
        smap.class_grid,
        smap.origin_xy[0],
        smap.origin_xy[1],
        smap.resolution,
        ego.x,
        ego.y,
        math.cos(ego.yaw),
        math.sin(ego.yaw),
        size,
        size,
        resolution,
        fill,
    )
    n_classes = len(smap.class_names)
    onehot = (classes[None, :, :] == np.arange(n_classes, dtype=np.int32)[:, None, None])
    return SceneRaster(onehot=onehot.astype(np.uint8), class_names=smap.class_names,
                       resolution=resolution)


def waypoints_to_pixels(
    waypoints: np.ndarray,
    size: int = SCENE_SIZE,
    resolution: float = SCENE_RES,
) -> tuple[np.ndarray, np.ndarray]:
    """Map ego-frame waypoints (H,2) to (row, col) scene pixels.

    Returns (pixels, inside): out-of-raster waypoints keep their unclipped
    pixel coordinates and are flagged False rather than dropped.
    """
    w = np.asarray(waypoints, dtype=np.float64).reshape(-1, 2)
    cr = size // 2
    rows = np.floor(cr - w[:, 0] / resolution + 0.5).astype(np.int64)
    cols = np.floor(cr - w[:, 1] / resolution + 0.5).astype(np.int64)
    pixels = np.stack([rows, cols], axis=1)
    inside = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
    return pixels, inside


# ---------------------------------------------------------------------------
# PGM / PPM image files


def write_pgm(path: str | Path, grid: np.ndarray) -> None:
    grid = np.asarray(grid, dtype=np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + grid.tobytes())


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())


def _read_netpbm(path: str | Path, magic: bytes) -> tuple[int, int, bytes]:
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise ValueError(f"{path}: expected {magic.decode()} file")
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise ValueError(f"{path}: truncated header")
        pos = m.end()
        if not m.group(1).startswith(b"#"):
            tokens.append(m.group(1))
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return width, height, data[pos + 1:]


def read_pgm(path: str | Path) -> np.ndarray:
    width, height, raw = _read_netpbm(path, b"P5")
    if len(raw) < width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(raw[: width * height], dtype=np.uint8).reshape(height, width).copy()


def read_ppm(path: str | Path) -> np.ndarray:
    width, height, raw = _read_netpbm(path, b"P6")
    if len(raw) < width * height * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return (
        np.frombuffer(raw[: width * height * 3], dtype=np.uint8)
        .reshape(height, width, 3)
        .copy()
    )


def plan_to_rgb(plan: PlanRaster) -> np.ndarray:
    """Roads white, routed segments green, background black."""
    h, w = plan.roads.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[plan.roads > 0] = (255, 255, 255)
    rgb[plan.route > 0] = (0, 255, 0)
    return rgb


def class_rgb(classes: np.ndarray) -> np.ndarray:
    palette = np.array(
        [CLASS_PALETTE[i % len(CLASS_PALETTE)] for i in range(int(classes.max()) + 1)],
        dtype=np.uint8,
    )
    return palette[classes]

"""Training-sample construction.

Turns a pose log, a semantic map, and a routed road graph into
(plan raster, scene raster, future trajectory) samples, with a deterministic
train/test split. A family of synthetic worlds with closed-form geometry
makes the whole pipeline testable without any real map data.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geo
from .raster import (
    DEFAULT_CLASS_NAMES,
    PLAN_RES,
    PLAN_SIZE,
    SCENE_RES,
    SCENE_SIZE,
    PlanRaster,
    Pose2,
    SceneRaster,
    SemanticMap,
    extract_local_scene,
    normalize_angle,
    render_global_plan,
)
from .rng import Rng

SAMPLE_MAGIC = b"TSMP"
SAMPLE_VERSION = 1


class BadHeader(ValueError):
    """Pose log header is not exactly t,x,y,yaw."""


class NonMonotonicTime(ValueError):
    """Pose log timestamps must strictly increase."""


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InsufficientLength(ValueError):
    """Remaining track is shorter than the requested horizon."""


@dataclass
class PoseTrack:
    """Timestamped SE(2) poses, strictly increasing in time."""

    t: np.ndarray  # (N,)
    xy: np.ndarray  # (N, 2)
    yaw: np.ndarray  # (N,)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.yaw = np.asarray(self.yaw, dtype=np.float64)
        if np.any(np.diff(self.t) <= 0):
            raise NonMonotonicTime("timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.t)

    def pose(self, i: int) -> Pose2:
        return Pose2(float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.yaw[i]))


@dataclass
class Trajectory:
    """Future waypoints in the ego frame, equally spaced along the source arc."""

    waypoints: np.ndarray  # (H, 2) meters
    spacing: float

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)

    @property
    def horizon(self) -> int:
        return len(self.waypoints)


@dataclass
class Sample:
    plan: PlanRaster
    scene: SceneRaster
    target: Trajectory
    meta: dict


@dataclass
class Manifest:
    config: dict
    train: list[str]
    test: list[str]

    def save(self, path: str | Path) -> None:
        payload = {"config": self.config, "train": self.train, "test": self.test}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        payload = json.loads(Path(path).read_text())
        return cls(config=payload["config"], train=payload["train"], test=payload["test"])


# ---------------------------------------------------------------------------
# Pose logs


def load_pose_log(csv_text: str) -> PoseTrack:
    """Parse a t,x,y,yaw CSV into a PoseTrack; yaw is normalized to (-pi, pi]."""
    lines = csv_text.splitlines()
    if not lines or lines[0].strip() != "t,x,y,yaw":
        raise BadHeader("expected header 't,x,y,yaw'")
    t, xy, yaw = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from exc
        t.append(vals[0])
        xy.append((vals[1], vals[2]))
        yaw.append(normalize_angle(vals[3]))
    if len(t) >= 2 and np.any(np.diff(np.asarray(t)) <= 0):
        raise NonMonotonicTime("timestamps must strictly increase")
    return PoseTrack(np.asarray(t), np.asarray(xy).reshape(-1, 2), np.asarray(yaw))


def dump_pose_log(track: PoseTrack) -> str:
    """Inverse of load_pose_log; float repr keeps the round trip bit-exact."""
    lines = ["t,x,y,yaw"]
    for i in range(len(track)):
        lines.append(
            f"{float(track.t[i])!r},{float(track.xy[i, 0])!r},"
            f"{float(track.xy[i, 1])!r},{float(track.yaw[i])!r}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Arc-length resampling


def resample_arclength(track: PoseTrack, start_index: int, spacing: float, horizon: int) -> Trajectory:
    """Waypoints at arc lengths spacing, 2*spacing, ... along the pose polyline.

    Positions are linearly interpolated between poses and expressed in the
    ego frame of track[start_index]. Raises InsufficientLength when the
    remaining polyline is shorter than horizon * spacing.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pts = track.xy[start_index:]
    if len(pts) < 2:
        raise InsufficientLength("track ends at start index")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    arcs = spacing * np.arange(1, horizon + 1)
    if arcs[-1] > total:
        raise InsufficientLength(
            f"need {arcs[-1]:.3f} m of track, have {total:.3f} m"
        )
    idx = np.searchsorted(cum, arcs, side="left")
    den = cum[idx] - cum[idx - 1]
    frac = (arcs - cum[idx - 1]) / den
    map_pts = pts[idx - 1] + frac[:, None] * (pts[idx] - pts[idx - 1])
    ego_pts = track.pose(start_index).to_ego(map_pts)
    return Trajectory(waypoints=ego_pts, spacing=spacing)


# ---------------------------------------------------------------------------
# Sample construction


def build_samples(
    track: PoseTrack,
    smap: SemanticMap,
    g: geo.RoadGraph,
    route: geo.Route,
    horizon: int,
    spacing: float,
    stride: int = 1,
    track_id: int = 0,
) -> list[Sample]:
    """One sample per usable track index (ascending), skipping short tails."""
    samples: list[Sample] = []
    for index in range(0, len(track), stride):
        try:
            target = resample_arclength(track, index, spacing, horizon)
        except InsufficientLength:
            continue
        pose = track.pose(index)
        samples.append(
            Sample(
                plan=render_global_plan(g, route, pose),
                scene=extract_local_scene(smap, pose),
                target=target,
                meta={"track_id": track_id, "index": index, "pose": pose},
            )
        )
    return samples


def sample_filename(meta: dict) -> str:
    return f"sample_{meta['track_id']:03d}_{meta['index']:05d}.bin"


def split(samples: list[Sample], ratio: float, seed: int) -> Manifest:
    """Deterministic split into train/test by a seeded shuffle.

    Samples are canonically pre-sorted by (track_id, index), so membership
    does not depend on the order in which samples were produced. The first
    ceil(ratio * n) of the shuffled order go to train.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError("ratio must be in (0, 1)")
    names = sorted(sample_filename(s.meta) for s in samples)
    if len(set(names)) != len(names):
        raise ValueError("duplicate (track_id, index) sample keys")
    rng = Rng(seed)
    rng.shuffle(names)
    n_train = math.ceil(ratio * len(names))
    return Manifest(
        config={"seed": seed, "split_ratio": ratio},
        train=names[:n_train],
        test=names[n_train:],
    )


# ---------------------------------------------------------------------------
# Sample files: magic TSMP, u32 version, u32 horizon, then little-endian f32
# planes: plan (2 x 200 x 200), scene (C x 400 x 400), target (H x 2)


@dataclass
class LoadedSample:
    plan: np.ndarray  # (2, 200, 200) float64
    scene: np.ndarray  # (C, 400, 400) float64
    target: np.ndarray  # (H, 2) float64


def write_sample(path: str | Path, sample: Sample) -> None:
    plan = np.stack([sample.plan.roads, sample.plan.route]).astype("<f4")
    if plan.shape[1:] != (PLAN_SIZE, PLAN_SIZE):
        raise ValueError(f"plan raster must be {PLAN_SIZE}x{PLAN_SIZE}")
    scene = sample.scene.onehot.astype("<f4")
    if scene.shape[1:] != (SCENE_SIZE, SCENE_SIZE):
        raise ValueError(f"scene raster must be {SCENE_SIZE}x{SCENE_SIZE}")
    target = sample.target.waypoints.astype("<f4")
    header = SAMPLE_MAGIC + struct.pack("<II", SAMPLE_VERSION, len(target))
    Path(path).write_bytes(header + plan.tobytes() + scene.tobytes() + target.tobytes())


def read_sample(path: str | Path) -> LoadedSample:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != SAMPLE_MAGIC:
        raise ValueError(f"{path}: not a sample file")
    version, horizon = struct.unpack("<II", data[4:12])
    if version != SAMPLE_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    plan_n = 2 * PLAN_SIZE * PLAN_SIZE
    floats = (len(data) - 12) // 4
    scene_n = floats - plan_n - 2 * horizon
    if scene_n <= 0 or scene_n % (SCENE_SIZE * SCENE_SIZE) != 0:
        raise ValueError(f"{path}: inconsistent payload size")
    raw = np.frombuffer(data, dtype="<f4", offset=12, count=floats)
    plan = raw[:plan_n].reshape(2, PLAN_SIZE, PLAN_SIZE).astype(np.float64)
    scene = (
        raw[plan_n:plan_n + scene_n]
        .reshape(-1, SCENE_SIZE, SCENE_SIZE)
        .astype(np.float64)
    )
    target = raw[plan_n + scene_n:].reshape(horizon, 2).astype(np.float64)
    return LoadedSample(plan=plan, scene=scene, target=target)


def write_dataset(
    out_dir: str | Path,
    samples: list[Sample],
    horizon: int,
    spacing: float,
    ratio: float,
    seed: int,
    stride: int = 1,
) -> Manifest:
    """Write sample files plus manifest.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = split(samples, ratio, seed)
    manifest.config.update({"H": horizon, "S": spacing, "stride": stride})
    for s in samples:
        write_sample(out / sample_filename(s.meta), s)
    manifest.save(out / "manifest.json")
    return manifest


def load_split(data_dir: str | Path, manifest: Manifest, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load one split as stacked arrays (plan, scene, target)."""
    names = {"train": manifest.train, "test": manifest.test}[which]
    loaded = [read_sample(Path(data_dir) / n) for n in names]
    if not loaded:
        raise ValueError(f"{which} split is empty")
    return (
        np.stack([s.plan for s in loaded]),
        np.stack([s.scene for s in loaded]),
        np.stack([s.target for s in loaded]),
    )


# ---------------------------------------------------------------------------
# Synthetic worlds

ROAD_WIDTH_M = 6.0
SIDEWALK_WIDTH_M = 2.0
LANE_MARK_WIDTH_M = 0.4
CROSSWALK_WIDTH_M = 2.0
TRACK_SPEED_MPS = 5.0
TRACK_RATE_HZ = 10.0
MAP_MARGIN_M = 60.0

SYNTH_KINDS = ("straight", "intersection", "u_turn", "curve")
INTERSECTION_MANEUVERS = ("left", "right", "straight")


@dataclass
class SyntheticWorld:
    kind: str
    osm_xml: str
    pose_csv: str
    graph: geo.RoadGraph
    smap: SemanticMap
    track: PoseTrack
    route: geo.Route
    meta: dict = field(default_factory=dict)


def _inverse_project(xy: tuple[float, float], anchor: geo.GeoPoint) -> geo.GeoPoint:
    lat = anchor.lat + math.degrees(xy[1] / geo.EARTH_RADIUS_M)
    lon = anchor.lon + math.degrees(
        xy[0] / (geo.EARTH_RADIUS_M * math.cos(math.radians(anchor.lat)))
    )
    return geo.GeoPoint(lat, lon)


def _osm_xml(anchor: geo.GeoPoint, nodes: dict[int, tuple[float, float]],
             ways: list[tuple[int, list[int]]]) -> str:
    parts = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6">']
    for nid in nodes:
        p = _inverse_project(nodes[nid], anchor)
        parts.append(f'  <node id="{nid}" lat="{p.lat!r}" lon="{p.lon!r}"/>')
    for wid, refs in ways:
        parts.append(f'  <way id="{wid}">')
        for ref in refs:
            parts.append(f'    <nd ref="{ref}"/>')
        parts.append('    <tag k="highway" v="residential"/>')
        parts.append("  </way>")
    parts.append("</osm>")
    return "\n".join(parts) + "\n"


def _arc_points(cx: float, cy: float, radius: float, a0: float, a1: float, n: int) -> list[tuple[float, float]]:
    return [
        (cx + radius * math.cos(a0 + (a1 - a0) * i / (n - 1)),
         cy + radius * math.sin(a0 + (a1 - a0) * i / (n - 1)))
        for i in range(n)
    ]


def _polyline_track(pts: np.ndarray, step: float, rate_hz: float) -> PoseTrack:
    """Walk a polyline at a fixed arc step; yaw follows the local segment."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n = int(math.floor(total / step)) + 1
    arcs = np.minimum(step * np.arange(n), total)
    idx = np.clip(np.searchsorted(cum, arcs, side="left"), 1, len(cum) - 1)
    den = cum[idx] - cum[idx - 1]
    frac = np.where(den > 0, (arcs - cum[idx - 1]) / np.where(den > 0, den, 1.0), 0.0)
    xy = pts[idx - 1] + frac[:, None] * (pts[idx] - pts[idx - 1])
    d = pts[idx] - pts[idx - 1]
    yaw = np.arctan2(d[:, 1], d[:, 0])
    t = np.arange(n) / rate_hz
    return PoseTrack(t=t, xy=xy, yaw=yaw)


def _paint_polyline(smap: SemanticMap, pts: np.ndarray, width_m: float, class_idx: int) -> None:
    """Paint class_idx where a map pixel center is within width_m/2 of the line."""
    grid = smap.class_grid
    h, w = grid.shape
    ox, oy = smap.origin_xy
    res = smap.resolution
    half = width_m / 2.0
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        c0 = max(0, int(math.floor((min(ax, bx) - half - ox) / res)))
        c1 = min(w - 1, int(math.ceil((max(ax, bx) + half - ox) / res)))
        r0 = max(0, int(math.floor((min(ay, by) - half - oy) / res)))
        r1 = min(h - 1, int(math.ceil((max(ay, by) + half - oy) / res)))
        if r0 > r1 or c0 > c1:
            continue
        px = ox + np.arange(c0, c1 + 1) * res
        py = oy + np.arange(r0, r1 + 1) * res
        dx, dy = bx - ax, by - ay
        den = dx * dx + dy * dy
        relx = px[None, :] - ax
        rely = py[:, None] - ay
        if den > 0:
            tt = np.clip((relx * dx + rely * dy) / den, 0.0, 1.0)
        else:
            tt = np.zeros((r1 - r0 + 1, c1 - c0 + 1))
        ex = relx - tt * dx
        ey = rely - tt * dy
        hit = ex * ex + ey * ey <= half * half
        sub = grid[r0:r1 + 1, c0:c1 + 1]
        sub[hit] = class_idx


def _paint_world(graph: geo.RoadGraph, centerlines: list[np.ndarray],
                 crosswalks: list[np.ndarray]) -> SemanticMap:
    names = DEFAULT_CLASS_NAMES
    all_xy = np.array(list(graph.nodes.values()))
    lo = all_xy.min(axis=0) - MAP_MARGIN_M
    hi = all_xy.max(axis=0) + MAP_MARGIN_M
    res = 0.2
    w = int(math.ceil((hi[0] - lo[0]) / res)) + 1
    h = int(math.ceil((hi[1] - lo[1]) / res)) + 1
    grid = np.full((h, w), names.index("vegetation"), dtype=np.int32)
    smap = SemanticMap(class_grid=grid, resolution=res, origin_xy=(float(lo[0]), float(lo[1])),
                       class_names=names)
    for line in centerlines:
        _paint_polyline(smap, line, ROAD_WIDTH_M + 2 * SIDEWALK_WIDTH_M, names.index("sidewalk"))
    for line in centerlines:
        _paint_polyline(smap, line, ROAD_WIDTH_M, names.index("road"))
    for line in crosswalks:
        _paint_polyline(smap, line, CROSSWALK_WIDTH_M, names.index("crosswalk"))
    for line in centerlines:
        _paint_polyline(smap, line, LANE_MARK_WIDTH_M, names.index("lane_marking"))
    return smap


def gen_synthetic_world(seed: int, kind: str, maneuver: str = "left") -> SyntheticWorld:
    """Generate a closed-form world: graph, semantic map, pose track, route.

    The seed moves the world to a different WGS84 anchor (so OSM output
    differs per seed) but the metric-frame geometry of each kind is fixed.
    For the intersection kind, `maneuver` picks the track through the
    junction: left, right, or straight.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic world kind {kind!r}")
    if maneuver not in INTERSECTION_MANEUVERS:
        raise ValueError(f"unknown maneuver {maneuver!r}")
    rng = Rng(seed)
    anchor = geo.GeoPoint(30.0 + rng.uniform(0.0, 6.0), -120.0 + rng.uniform(0.0, 6.0))

    nodes: dict[int, tuple[float, float]] = {}
    ways: list[tuple[int, list[int]]] = []

    def add_chain(way_id: int, pts: list[tuple[float, float]], start_id: int) -> list[int]:
        ids = []
        for i, p in enumerate(pts):
            nid = start_id + i
            nodes[nid] = p
            ids.append(nid)
        ways.append((way_id, ids))
        return ids

    track_line: np.ndarray
    if kind == "straight":
        pts = [(x, 0.0) for x in range(-80, 81, 20)]
        add_chain(100, pts, 1)
        track_line = np.array(pts, dtype=np.float64)
    elif kind == "intersection":
        center = (0.0, 0.0)
        nodes[1] = center
        arm_w = [(-x, 0.0) for x in range(20, 81, 20)]
        arm_e = [(x, 0.0) for x in range(20, 81, 20)]
        arm_n = [(0.0, y) for y in range(20, 81, 20)]
        arm_s = [(0.0, -y) for y in range(20, 81, 20)]
        for wid, arm, base in ((101, arm_w, 10), (102, arm_e, 20), (103, arm_n, 30), (104, arm_s, 40)):
            ids = []
            for i, p in enumerate(arm):
                nid = base + i
                nodes[nid] = p
                ids.append(nid)
            ways.append((wid, [1] + ids))
        r = 6.0
        approach = [(-80.0, 0.0), (-r, 0.0)]
        if maneuver == "left":
            turn = _arc_points(-r, r, r, -math.pi / 2, 0.0, 16)
            exit_leg = [(0.0, r), (0.0, 80.0)]
        elif maneuver == "right":
            turn = _arc_points(-r, -r, r, math.pi / 2, 0.0, 16)
            exit_leg = [(0.0, -r), (0.0, -80.0)]
        else:
            turn = []
            exit_leg = [(80.0, 0.0)]
        track_line = np.array(approach + turn + exit_leg, dtype=np.float64)
    elif kind == "u_turn":
        out_leg = [(x, 0.0) for x in range(-70, 31, 20)]
        cap = _arc_points(30.0, 10.0, 10.0, -math.pi / 2, math.pi / 2, 13)
        back_leg = [(x, 20.0) for x in range(30, -71, -20)]
        pts = out_leg + cap[1:-1] + back_leg
        add_chain(100, pts, 1)
        track_line = np.array(pts, dtype=np.float64)
    else:  # curve
        lead_in = [(-60.0, 0.0), (-20.0, 0.0), (0.0, 0.0)]
        arc = _arc_points(0.0, 50.0, 50.0, -math.pi / 2, 0.0, 13)
        lead_out = [(50.0, 50.0), (50.0, 90.0)]
        pts = lead_in + arc[1:-1] + lead_out
        add_chain(100, pts, 1)
        track_line = np.array(pts, dtype=np.float64)

    osm_xml = _osm_xml(anchor, nodes, ways)
    graph = geo.parse_osm(osm_xml)

    # author everything downstream in the parsed graph's frame so that map,
    # track, and route are mutually consistent
    node_xy = {nid: np.array(graph.nodes[nid]) for nid in graph.nodes}
    shift = node_xy[next(iter(nodes))] - np.array(nodes[next(iter(nodes))], dtype=np.float64)
    track_line = track_line + shift

    centerlines = []
    for _, refs in ways:
        centerlines.append(np.array([node_xy[r] for r in refs]))
    crosswalks = []
    if kind == "intersection":
        d = 12.0
        half = ROAD_WIDTH_M / 2.0 + SIDEWALK_WIDTH_M
        cx, cy = node_xy[1]
        crosswalks = [
            np.array([(cx - d, cy - half), (cx - d, cy + half)]),
            np.array([(cx + d, cy - half), (cx + d, cy + half)]),
            np.array([(cx - half, cy - d), (cx + half, cy - d)]),
            np.array([(cx - half, cy + d), (cx + half, cy + d)]),
        ]
    smap = _paint_world(graph, centerlines, crosswalks)

    track = _polyline_track(track_line, TRACK_SPEED_MPS / TRACK_RATE_HZ, TRACK_RATE_HZ)
    src = geo.nearest_node(graph, tuple(track.xy[0]))
    dst = geo.nearest_node(graph, tuple(track.xy[-1]))
    route = geo.shortest_path(graph, src, dst)
    return SyntheticWorld(
        kind=kind,
        osm_xml=osm_xml,
        pose_csv=dump_pose_log(track),
        graph=graph,
        smap=smap,
        track=track,
        route=route,
        meta={"maneuver": maneuver if kind == "intersection" else None, "seed": seed},
    )

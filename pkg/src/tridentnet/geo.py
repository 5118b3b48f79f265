"""OpenStreetMap road graphs and shortest-path routing.

Parses the OSM XML subset needed for routing (nodes, highway-tagged ways),
projects WGS84 coordinates into a local metric frame, and runs Dijkstra with a
deterministic lexicographic tie-break on equal-cost paths.
"""

from __future__ import annotations

import heapq
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

EARTH_RADIUS_M = 6_371_000.0


class MalformedXml(ValueError):
    """The input is not well-formed XML."""


class DanglingRef(ValueError):
    """A way references a node id that is not declared."""


class EmptyGraph(ValueError):
    """No highway-tagged ways survive parsing, or the graph has no nodes."""


class UnknownNode(KeyError):
    """A queried node id is not in the graph."""


class NoRoute(ValueError):
    """Source and destination lie in different connected components."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} out of range")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} out of range")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    s = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(max(0.0, s))))


def project(p: GeoPoint, origin: GeoPoint) -> tuple[float, float]:
    """Equirectangular projection of p around origin, in meters.

    x grows east, y grows north. Adequate for extents of a few kilometers.
    """
    x = EARTH_RADIUS_M * math.radians(p.lon - origin.lon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    return x, y


@dataclass(frozen=True)
class Edge:
    to: int
    length: float
    way_id: int


@dataclass(frozen=True)
class Route:
    node_ids: list[int]
    total_length: float


@dataclass
class RoadGraph:
    """Undirected road graph in a local metric frame.

    ``nodes`` maps node id to projected (x, y); ``latlon`` keeps the source
    WGS84 coordinates so projection round-trips exactly; ``adj`` holds the
    symmetric adjacency with haversine edge lengths.
    """

    origin: GeoPoint
    nodes: dict[int, tuple[float, float]] = field(default_factory=dict)
    latlon: dict[int, GeoPoint] = field(default_factory=dict)
    adj: dict[int, list[Edge]] = field(default_factory=dict)

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.adj.values()) // 2

    def edge_length(self, a: int, b: int) -> float:
        for e in self.adj[a]:
            if e.to == b:
                return e.length
        raise UnknownNode(f"no edge {a}-{b}")


def parse_osm(xml_text: str) -> RoadGraph:
    """Build a RoadGraph from an OSM XML string.

    Only <node id lat lon>, <way> with <nd ref> children and a
    <tag k="highway"> marker are consulted; everything else is ignored.
    Ways without a highway tag are dropped, and so are nodes not referenced
    by any kept way.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc

    raw_nodes: dict[int, GeoPoint] = {}
    for el in root.iter("node"):
        nid = int(el.attrib["id"])
        raw_nodes[nid] = GeoPoint(float(el.attrib["lat"]), float(el.attrib["lon"]))

    kept_ways: list[tuple[int, list[int]]] = []
    for el in root.iter("way"):
        refs = [int(nd.attrib["ref"]) for nd in el.findall("nd")]
        is_highway = any(tag.attrib.get("k") == "highway" for tag in el.findall("tag"))
        if not is_highway:
            continue
        wid = int(el.attrib.get("id", len(kept_ways) + 1))
        kept_ways.append((wid, refs))

    if not kept_ways:
        raise EmptyGraph("no highway-tagged ways in input")

    kept_node_ids: list[int] = []
    seen: set[int] = set()
    for _, refs in kept_ways:
        for nid in refs:
            if nid not in raw_nodes:
                raise DanglingRef(f"way references unknown node {nid}")
            if nid not in seen:
                seen.add(nid)
                kept_node_ids.append(nid)
    if not kept_node_ids:
        raise EmptyGraph("kept ways reference no nodes")

    lat0 = sum(raw_nodes[n].lat for n in kept_node_ids) / len(kept_node_ids)
    lon0 = sum(raw_nodes[n].lon for n in kept_node_ids) / len(kept_node_ids)
    origin = GeoPoint(lat0, lon0)

    g = RoadGraph(origin=origin)
    for nid in kept_node_ids:
        g.latlon[nid] = raw_nodes[nid]
        g.nodes[nid] = project(raw_nodes[nid], origin)
        g.adj[nid] = []

    for wid, refs in kept_ways:
        for a, b in zip(refs, refs[1:]):
            if a == b:
                continue  # degenerate zero-length segment
            length = haversine_m(raw_nodes[a], raw_nodes[b])
            if length <= 0.0:
                continue
            g.adj[a].append(Edge(b, length, wid))
            g.adj[b].append(Edge(a, length, wid))
    return g


def nearest_node(g: RoadGraph, xy: tuple[float, float]) -> int:
    """Node id minimizing Euclidean distance to xy; ties go to the smallest id."""
    if not g.nodes:
        raise EmptyGraph("graph has no nodes")
    qx, qy = xy
    best = None
    for nid in sorted(g.nodes):
        x, y = g.nodes[nid]
        d2 = (x - qx) ** 2 + (y - qy) ** 2
        if best is None or d2 < best[0]:
            best = (d2, nid)
    return best[1]


def shortest_path(g: RoadGraph, src: int, dst: int) -> Route:
    """Dijkstra over edge lengths.

    Among equal-cost paths the node-id sequence that is lexicographically
    smallest is returned, which makes routing deterministic regardless of
    adjacency ordering.
    """
    if src not in g.nodes:
        raise UnknownNode(f"unknown source node {src}")
    if dst not in g.nodes:
        raise UnknownNode(f"unknown destination node {dst}")
    if src == dst:
        return Route([src], 0.0)

    # Heap entries carry the full path so that cost ties resolve to the
    # lexicographically smallest node sequence. Edge lengths are strictly
    # positive, so the first pop of a node is final.
    done: set[int] = set()
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return Route(list(path), cost)
        for e in g.adj[node]:
            if e.to not in done:
                heapq.heappush(heap, (cost + e.length, path + (e.to,)))
    raise NoRoute(f"no path from {src} to {dst}")

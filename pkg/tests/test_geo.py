import math

import numpy as np
import pytest

from tridentnet import geo

R = 6_371_000.0

TWO_NODE_XML = """<?xml version="1.0"?>
<osm>
  <node id="1" lat="32.88" lon="-117.23"/>
  <node id="2" lat="32.881" lon="-117.23"/>
  <way id="10"><nd ref="1"/><nd ref="2"/><tag k="highway" v="residential"/></way>
</osm>
"""


def _hav(lat1, lon1, lat2, lon2):
    # independent haversine for oracle checks
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R * math.asin(math.sqrt(a))


def test_parse_minimal():
    g = geo.parse_osm(TWO_NODE_XML)
    assert len(g.nodes) == 2
    assert g.num_edges == 1
    assert g.adj[1][0].to == 2
    assert g.adj[2][0].to == 1


def test_way_without_highway_tag_dropped():
    xml = TWO_NODE_XML.replace('<tag k="highway" v="residential"/>', "")
    with pytest.raises(geo.EmptyGraph):
        geo.parse_osm(xml)


def test_malformed_xml():
    with pytest.raises(geo.MalformedXml):
        geo.parse_osm("<osm><node id=")


def test_dangling_ref():
    xml = TWO_NODE_XML.replace('<nd ref="2"/>', '<nd ref="99"/>')
    with pytest.raises(geo.DanglingRef):
        geo.parse_osm(xml)


def test_unreferenced_nodes_dropped():
    xml = TWO_NODE_XML.replace(
        "<way", '<node id="3" lat="32.9" lon="-117.2"/>\n  <way'
    )
    g = geo.parse_osm(xml)
    assert 3 not in g.nodes


def test_edge_lengths_match_haversine_oracle():
    coords = [
        (1, 32.880, -117.230),
        (2, 32.881, -117.231),
        (3, 32.882, -117.229),
        (4, 32.883, -117.233),
        (5, 32.884, -117.228),
    ]
    nodes = "\n".join(f'<node id="{i}" lat="{la}" lon="{lo}"/>' for i, la, lo in coords)
    refs = "".join(f'<nd ref="{i}"/>' for i, _, _ in coords)
    g = geo.parse_osm(f'<osm>{nodes}<way id="1">{refs}<tag k="highway" v="x"/></way></osm>')
    for (i1, la1, lo1), (i2, la2, lo2) in zip(coords, coords[1:]):
        expect = _hav(la1, lo1, la2, lo2)
        assert g.edge_length(i1, i2) == pytest.approx(expect, rel=1e-6)
        assert g.edge_length(i1, i2) > 0


def test_project_anchor_is_origin():
    p = geo.GeoPoint(32.88, -117.23)
    assert geo.project(p, p) == (0.0, 0.0)


def test_project_north_step_closed_form():
    origin = geo.GeoPoint(0.0, 0.0)
    p = geo.GeoPoint(1e-5, 0.0)
    x, y = geo.project(p, origin)
    assert x == 0.0
    assert y == pytest.approx(R * math.radians(1e-5), rel=1e-12)
    assert y == pytest.approx(1.11195, abs=5e-5)


def test_project_east_step_closed_form():
    origin = geo.GeoPoint(32.88, 0.0)
    p = geo.GeoPoint(32.88, 1e-5)
    x, y = geo.project(p, origin)
    assert y == 0.0
    assert x == pytest.approx(R * math.radians(1e-5) * math.cos(math.radians(32.88)), rel=1e-12)


def test_parse_project_roundtrip_bit_exact():
    g = geo.parse_osm(TWO_NODE_XML)
    for nid, xy in g.nodes.items():
        assert geo.project(g.latlon[nid], g.origin) == xy


def test_geopoint_range_validation():
    with pytest.raises(ValueError):
        geo.GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        geo.GeoPoint(0.0, 181.0)


# ---------------------------------------------------------------------------
# nearest_node


def test_nearest_exact_hit():
    g = geo.parse_osm(TWO_NODE_XML)
    assert geo.nearest_node(g, g.nodes[2]) == 2


def test_nearest_tie_prefers_smaller_id():
    xml = """<osm>
      <node id="7" lat="0.001" lon="0"/>
      <node id="3" lat="-0.001" lon="0"/>
      <way id="1"><nd ref="7"/><nd ref="3"/><tag k="highway" v="x"/></way>
    </osm>"""
    g = geo.parse_osm(xml)
    assert geo.nearest_node(g, (0.0, 0.0)) == 3


def test_nearest_empty_graph():
    with pytest.raises(geo.EmptyGraph):
        geo.nearest_node(geo.RoadGraph(origin=geo.GeoPoint(0, 0)), (0, 0))


def test_nearest_matches_linear_scan_oracle():
    g = _random_graph(np.random.default_rng(42), n_nodes=8, n_edges=12)
    rng = np.random.default_rng(7)
    for _ in range(50):
        q = tuple(rng.uniform(-300, 300, 2))
        best = min(
            ((g.nodes[n][0] - q[0]) ** 2 + (g.nodes[n][1] - q[1]) ** 2, n)
            for n in sorted(g.nodes)
        )[1]
        assert geo.nearest_node(g, q) == best


# ---------------------------------------------------------------------------
# shortest_path


def _random_graph(rng, n_nodes, n_edges) -> geo.RoadGraph:
    ids = list(range(1, n_nodes + 1))
    nodes = "\n".join(
        f'<node id="{i}" lat="{rng.uniform(-0.005, 0.005)!r}" lon="{rng.uniform(-0.005, 0.005)!r}"/>'
        for i in ids
    )
    ways = []
    for w in range(n_edges):
        a, b = rng.choice(ids, 2, replace=False)
        ways.append(
            f'<way id="{100 + w}"><nd ref="{a}"/><nd ref="{b}"/><tag k="highway" v="x"/></way>'
        )
    return geo.parse_osm(f"<osm>{nodes}{''.join(ways)}</osm>")


def _brute_force_cost(g: geo.RoadGraph, src: int, dst: int) -> float | None:
    best = None

    def dfs(node, cost, visited):
        nonlocal best
        if best is not None and cost > best:
            return
        if node == dst:
            best = cost if best is None else min(best, cost)
            return
        for e in g.adj[node]:
            if e.to not in visited:
                dfs(e.to, cost + e.length, visited | {e.to})

    dfs(src, 0.0, {src})
    return best


def test_trivial_same_node():
    g = geo.parse_osm(TWO_NODE_XML)
    r = geo.shortest_path(g, 1, 1)
    assert r.node_ids == [1]
    assert r.total_length == 0.0


def test_disconnected_components():
    xml = """<osm>
      <node id="1" lat="0" lon="0"/><node id="2" lat="0" lon="0.001"/>
      <node id="3" lat="0.01" lon="0"/><node id="4" lat="0.01" lon="0.001"/>
      <way id="1"><nd ref="1"/><nd ref="2"/><tag k="highway" v="x"/></way>
      <way id="2"><nd ref="3"/><nd ref="4"/><tag k="highway" v="x"/></way>
    </osm>"""
    g = geo.parse_osm(xml)
    with pytest.raises(geo.NoRoute):
        geo.shortest_path(g, 1, 3)


def test_unknown_node():
    g = geo.parse_osm(TWO_NODE_XML)
    with pytest.raises(geo.UnknownNode):
        geo.shortest_path(g, 1, 42)


def test_route_total_is_sum_of_member_edges():
    g = _random_graph(np.random.default_rng(3), 8, 14)
    ids = sorted(g.nodes)
    r = geo.shortest_path(g, ids[0], ids[-1])
    total = sum(g.edge_length(a, b) for a, b in zip(r.node_ids, r.node_ids[1:]))
    assert r.total_length == pytest.approx(total, abs=1e-9)


def test_dijkstra_matches_bruteforce_on_random_graphs():
    rng = np.random.default_rng(2024)
    checked = 0
    for trial in range(100):
        g = _random_graph(rng, int(rng.integers(2, 9)), int(rng.integers(1, 15)))
        ids = sorted(g.nodes)
        src, dst = ids[0], ids[-1]
        expect = _brute_force_cost(g, src, dst)
        if expect is None:
            with pytest.raises(geo.NoRoute):
                geo.shortest_path(g, src, dst)
            continue
        got = geo.shortest_path(g, src, dst)
        assert got.total_length == pytest.approx(expect, rel=1e-12)
        checked += 1
    assert checked >= 50


def test_subpath_optimality():
    g = _random_graph(np.random.default_rng(11), 8, 14)
    ids = sorted(g.nodes)
    r = geo.shortest_path(g, ids[0], ids[-1])
    cost = 0.0
    for i in range(1, len(r.node_ids)):
        cost += g.edge_length(r.node_ids[i - 1], r.node_ids[i])
        prefix = geo.shortest_path(g, ids[0], r.node_ids[i])
        assert prefix.total_length == pytest.approx(cost, rel=1e-12)


def test_cost_symmetry():
    g = _random_graph(np.random.default_rng(5), 8, 14)
    ids = sorted(g.nodes)
    fwd = geo.shortest_path(g, ids[0], ids[-1]).total_length
    bwd = geo.shortest_path(g, ids[-1], ids[0]).total_length
    assert fwd == pytest.approx(bwd, rel=1e-12)


def test_equal_cost_tie_breaks_lexicographically():
    # rhombus: 1 -> {2, 3} -> 4 with bit-identical costs on both sides
    xml = """<osm>
      <node id="1" lat="0" lon="0"/>
      <node id="2" lat="0.001" lon="0.001"/>
      <node id="3" lat="-0.001" lon="0.001"/>
      <node id="4" lat="0" lon="0.002"/>
      <way id="1"><nd ref="1"/><nd ref="2"/><nd ref="4"/><tag k="highway" v="x"/></way>
      <way id="2"><nd ref="1"/><nd ref="3"/><nd ref="4"/><tag k="highway" v="x"/></way>
    </osm>"""
    g = geo.parse_osm(xml)
    d12, d13 = g.edge_length(1, 2), g.edge_length(1, 3)
    assert d12 == d13  # construction guarantees the exact tie
    assert geo.shortest_path(g, 1, 4).node_ids == [1, 2, 4]

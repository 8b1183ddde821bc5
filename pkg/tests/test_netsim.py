import itertools
import math
import random

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcert.netsim import graph as g
from mpcert.netsim.events import EventQueue
from mpcert.netsim.mobility import WaypointState, draw_waypoint, waypoint_step
from mpcert.netsim.trace import Trace
from mpcert.netsim.world import ConfigError, SimConfig, SimWorld, derive_rng


def line(n):
    return g.from_edges(range(n), [(i, i + 1) for i in range(n - 1)])


def random_graph(rng, n, p):
    return g.from_edges(range(n), [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p])


def static_world(graph, **kw):
    cfg = SimConfig(node_count=len(graph), **kw)
    return SimWorld(cfg, graph=graph)


# -- event queue / run ----------------------------------------------------------


def test_equal_time_events_run_in_insertion_order():
    w = static_world(line(2))
    seen = []
    for tag in "abc":
        w.schedule(1.0, seen.append, tag)
    w.run(2.0)
    assert seen == ["a", "b", "c"]


def test_empty_queue_advances_clock():
    w = static_world(line(2))
    w.run(5.0)
    assert w.now == 5.0


def test_run_rejects_past():
    w = static_world(line(2))
    w.run(1.0)
    with pytest.raises(ValueError):
        w.run(0.5)


def test_events_after_horizon_stay_queued():
    w = static_world(line(2))
    seen = []
    w.schedule(3.0, seen.append, 1)
    w.run(2.0)
    assert seen == [] and len(w.events) == 1
    w.run(4.0)
    assert seen == [1]


def test_event_queue_orders_by_time_then_sequence():
    q = EventQueue()
    q.push(2.0, print, "x")
    q.push(1.0, print, "y")
    q.push(1.0, print, "z")
    assert [q.pop()[2] for _ in range(3)] == [("y",), ("z",), ("x",)]
    assert not q


@pytest.mark.parametrize("kw", [
    {"node_count": 0}, {"area": (0.0, 10.0)}, {"duration": 0}, {"radio_range": -1},
    {"pause_time": -1}, {"rng_seed": -1}, {"per_hop_latency": 0},
])
def test_sim_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw).validate()


def test_derive_rng_streams_are_independent_and_stable():
    a = [derive_rng(5, "x").random() for _ in range(2)]
    assert a[0] == a[1]
    assert derive_rng(5, "x").random() != derive_rng(5, "y").random()
    assert derive_rng(5, "x").random() != derive_rng(6, "x").random()


# -- connectivity --------------------------------------------------------------


def test_range_threshold():
    assert g.connectivity_graph([(0, 0), (249, 0)], 250)[0] == {1}
    assert g.connectivity_graph([(0, 0), (251, 0)], 250)[0] == set()
    assert g.connectivity_graph([(0, 0), (250, 0)], 250)[0] == {1}


def test_connectivity_matches_all_pairs_oracle():
    rng = np.random.default_rng(7)
    pos = rng.uniform(0, 1500, size=(100, 2))
    got = g.connectivity_graph(pos, 250.0)
    for i in range(100):
        expected = {j for j in range(100)
                    if j != i and math.hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]) <= 250.0}
        assert got[i] == expected


# -- mobility ------------------------------------------------------------------


def test_kinematics_ten_metres_per_tick():
    s = WaypointState(0.0, 0.0, 100.0, 0.0, speed=10.0)
    waypoint_step(s, random.Random(0), 1.0, (1500.0, 1500.0), 10.0, 30.0)
    assert (s.x, s.y) == pytest.approx((10.0, 0.0))


def test_arrival_then_pause_then_new_waypoint():
    s = WaypointState(0.0, 0.0, 5.0, 0.0, speed=10.0)
    rng = random.Random(1)
    waypoint_step(s, rng, 1.0, (1500.0, 1500.0), 10.0, 30.0)
    assert (s.x, s.y) == (5.0, 0.0)
    assert s.pause_left == pytest.approx(29.5)
    waypoint_step(s, rng, 29.0, (1500.0, 1500.0), 10.0, 30.0)
    assert (s.x, s.y) == (5.0, 0.0)
    waypoint_step(s, rng, 1.0, (1500.0, 1500.0), 10.0, 30.0)
    # pause ended half-way through the step; a fresh leg started
    assert s.pause_left == 0.0
    assert (s.wx, s.wy) != (5.0, 0.0)
    assert 0.0 < s.speed <= 10.0
    assert math.hypot(s.x - 5.0, s.y) == pytest.approx(0.5 * s.speed)


def test_waypoints_uniform_chi_square():
    rng = random.Random(12345)
    counts = np.zeros((10, 10))
    n = 100_000
    for _ in range(n):
        x, y = draw_waypoint(rng, (1500.0, 1500.0))
        counts[min(int(x / 150), 9), min(int(y / 150), 9)] += 1
    expected = n / 100
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 99 degrees of freedom; the 0.999 quantile is about 148.2
    assert chi2 < 148.2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_positions_stay_in_area(seed):
    cfg = SimConfig(node_count=20, duration=60.0, rng_seed=seed, pause_time=0.0, max_speed=40.0)
    w = SimWorld(cfg, trace=False)
    for t in range(1, 61, 5):
        w.run(float(t))
        pos = w.positions()
        assert (pos >= 0).all() and (pos[:, 0] <= 1500).all() and (pos[:, 1] <= 1500).all()


def test_mobility_changes_topology_and_is_seeded():
    a = SimWorld(SimConfig(rng_seed=3), trace=False).run(60.0)
    b = SimWorld(SimConfig(rng_seed=3), trace=False).run(60.0)
    c = SimWorld(SimConfig(rng_seed=4), trace=False).run(60.0)
    assert np.array_equal(a.positions(), b.positions())
    assert not np.array_equal(a.positions(), c.positions())


# -- BFS, flood, routes ---------------------------------------------------------


def test_flood_line_ttl_two():
    w = static_world(line(4))
    h = w.flood(0, "x", 2, lambda v, p, path, ttl: True)
    w.run(1.0)
    assert h.reached == {1, 2}


def test_flood_ttl_diameter_reaches_all():
    w = static_world(line(6))
    h = w.flood(0, "x", 5, lambda v, p, path, ttl: True)
    w.run(1.0)
    assert h.reached == {1, 2, 3, 4, 5}


def test_flood_rejects_zero_ttl():
    with pytest.raises(ValueError):
        static_world(line(2)).flood(0, "x", 0, lambda *a: True)


@pytest.mark.parametrize("seed", range(20))
def test_flood_reaches_bfs_ball(seed):
    rng = random.Random(seed)
    graph = random_graph(rng, 20, 0.15)
    w = static_world(graph)
    arrivals = {}

    def recv(v, payload, path, ttl):
        assert v not in arrivals, "delivered twice"
        arrivals[v] = (w.now, path, ttl)
        return True

    h = w.flood(0, "x", 3, recv)
    w.run(10.0)
    G = nx.Graph(list((a, b) for a in graph for b in graph[a]))
    G.add_nodes_from(graph)
    oracle = {v for v, d in nx.single_source_shortest_path_length(G, 0, cutoff=3).items() if 0 < d <= 3}
    assert h.reached == oracle == set(arrivals)
    for v, (t, path, ttl) in arrivals.items():
        hops = len(path) - 1
        assert t == pytest.approx(hops * w.config.per_hop_latency)
        assert hops == nx.shortest_path_length(G, 0, v)
        assert ttl == 3 - hops + 1


def test_flood_caches_reverse_routes():
    w = static_world(line(4))
    w.flood(0, "x", 3, lambda *a: True)
    w.run(1.0)
    assert w.cached_route(3, 0) == (3, 2, 1, 0)


def test_flood_receiver_can_stop_forwarding():
    w = static_world(line(4))
    h = w.flood(0, "x", 3, lambda v, *a: v != 1)
    w.run(1.0)
    assert h.reached == {1}


def test_route_adjacent_and_disconnected():
    graph = g.from_edges(range(4), [(0, 1), (2, 3)])
    w = static_world(graph)
    assert w.discover_route(0, 1) == (0, 1)
    assert w.discover_route(0, 3) is None
    assert w.trace.of_kind("route_discovery")[-1].outcome == "unreachable"


@pytest.mark.parametrize("seed", range(25))
def test_route_is_bfs_shortest(seed):
    rng = random.Random(seed)
    graph = random_graph(rng, 15, 0.2)
    G = nx.Graph()
    G.add_nodes_from(graph)
    G.add_edges_from((a, b) for a in graph for b in graph[a])
    for s, t in itertools.permutations(range(15), 2):
        r = g.shortest_route(graph, s, t)
        if not nx.has_path(G, s, t):
            assert r is None
            continue
        assert len(r) - 1 == nx.shortest_path_length(G, s, t)
        assert len(set(r)) == len(r) and g.route_is_valid(graph, r)
        # lexicographically smallest among all shortest routes
        assert r == min(tuple(p) for p in nx.all_shortest_paths(G, s, t))


def test_route_invalidated_when_link_disappears():
    graph = line(4)
    w = static_world(graph)
    w.discover_route(0, 3)
    w.set_graph(g.from_edges(range(4), [(0, 1), (2, 3)]))
    assert w.cached_route(0, 3) is None
    assert w.trace.of_kind("route_invalidated")


# -- unicast ------------------------------------------------------------------


def test_unicast_three_hops_timing():
    w = static_world(line(4))
    got = []
    w.unicast((0, 1, 2, 3), "p", lambda p, r: got.append(w.now))
    w.run(1.0)
    assert got == [pytest.approx(0.03)]


def test_unicast_dropping_relay():
    w = static_world(line(4))
    w.relay_filter = lambda node, payload: ("drop", payload) if node == 2 else ("pass", payload)
    delivered, dropped = [], []
    w.unicast((0, 1, 2, 3), "p", lambda p, r: delivered.append(p), lambda p, at, why: dropped.append((at, why)))
    w.run(1.0)
    assert delivered == [] and dropped == [(2, "adversary")]


def test_unicast_tampering_relay_rewrites():
    w = static_world(line(3))
    w.relay_filter = lambda node, payload: ("tamper", payload + "!")
    got = []
    w.unicast((0, 1, 2), "p", lambda p, r: got.append(p))
    w.run(1.0)
    assert got == ["p!"]
    assert w.trace.of_kind("unicast_tamper")


def test_unicast_link_break_mid_transit():
    w = static_world(line(4))
    dropped = []
    w.unicast((0, 1, 2, 3), "p", lambda p, r: pytest.fail("delivered"), lambda p, at, why: dropped.append((at, why)))
    # cut 1-2 after the first hop is under way
    w.schedule(0.005, w.set_graph, g.from_edges(range(4), [(0, 1), (2, 3)]))
    w.run(1.0)
    assert dropped == [(1, "link_break")]
    rec = w.trace.of_kind("unicast_drop")[0]
    assert (rec.node, rec.peer, rec.outcome) == (1, 2, "link_break")


# -- node-disjoint paths ---------------------------------------------------------


def test_disjoint_cycle_of_four():
    S, A, D, B = 0, 1, 2, 3
    graph = g.from_edges(range(4), [(S, A), (A, D), (D, B), (B, S)])
    assert g.node_disjoint_paths(graph, S, D, 2) == [(S, A, D), (S, B, D)]


def test_disjoint_line_gives_one():
    assert g.node_disjoint_paths(line(5), 0, 4, 2) == [(0, 1, 2, 3, 4)]


def test_disjoint_no_path_and_errors():
    graph = g.from_edges(range(4), [(0, 1), (2, 3)])
    assert g.node_disjoint_paths(graph, 0, 3, 2) == []
    with pytest.raises(ValueError):
        g.node_disjoint_paths(graph, 1, 1, 2)


def test_disjoint_direct_edge_counts_once():
    graph = g.from_edges(range(3), [(0, 1), (0, 2), (2, 1)])
    assert g.node_disjoint_paths(graph, 0, 1) == [(0, 1), (0, 2, 1)]


def split_graph_flow_oracle(graph, s, t):
    """Max-flow value on the vertex-split digraph, solved by networkx."""
    D = nx.DiGraph()
    for v in graph:
        D.add_edge(("in", v), ("out", v), capacity=1 if v not in (s, t) else len(graph))
    for u in graph:
        for v in graph[u]:
            D.add_edge(("out", u), ("in", v), capacity=1)
    return nx.maximum_flow_value(D, ("out", s), ("in", t))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.floats(0.0, 1.0), st.integers(0, 2**31), st.integers(1, 5))
def test_disjoint_matches_flow_oracle(n, p, seed, k):
    rng = random.Random(seed)
    graph = random_graph(rng, n, p)
    s, t = rng.sample(range(n), 2)
    paths = g.node_disjoint_paths(graph, s, t, k)
    assert len(paths) == min(k, split_graph_flow_oracle(graph, s, t))
    assert g.paths_internally_disjoint(paths)
    for pth in paths:
        assert pth[0] == s and pth[-1] == t and g.route_is_valid(graph, pth)
    assert paths == g.node_disjoint_paths(graph, s, t, k)


def test_paths_internally_disjoint_detects_overlap():
    assert g.paths_internally_disjoint([(0, 1, 3), (0, 2, 3)])
    assert not g.paths_internally_disjoint([(0, 1, 3), (0, 1, 2, 3)])
    assert not g.paths_internally_disjoint([(0, 1, 1, 3)])


# -- trace / determinism ------------------------------------------------------------


def test_trace_fields_and_order():
    t = Trace()
    t.emit(1.5, "k", 1, 2, (3, 4), "ok", "d")
    assert next(iter(t.lines())) == '{"time":"1.500000","kind":"k","node":1,"peer":2,"request":"3:4","outcome":"ok","detail":"d"}'
    disabled = Trace(enabled=False)
    disabled.emit(0.0, "k")
    assert len(disabled) == 0


def _scripted_trace(seed):
    w = SimWorld(SimConfig(node_count=30, rng_seed=seed, duration=20.0))
    for i in range(5):
        w.schedule(2.0 * i, lambda i=i: w.flood(i, "x", 3, lambda *a: True))
        w.schedule(2.0 * i + 1, lambda i=i: w.discover_route(i, 29 - i))
    w.run(20.0)
    return list(w.trace.lines())


def test_same_seed_identical_trace():
    a, b = _scripted_trace(8), _scripted_trace(8)
    assert a == b and a
    times = [float(line.split('"time":"')[1].split('"')[0]) for line in a]
    assert times == sorted(times)

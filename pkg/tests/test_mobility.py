import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridsim.mobility import (
    Edge, NetworkError, RoadNetwork, is_finished, plan_route, sample_trajectory,
    shortest_path, start_state, step,
)

SQUARE = {
    "nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 100, "y": 0},
              {"id": 2, "x": 100, "y": 100}, {"id": 3, "x": 0, "y": 100}],
    "edges": [
        {"id": 10, "from": 0, "to": 1, "length": 100, "speed_limit": 10, "bidir": True},
        {"id": 11, "from": 1, "to": 2, "length": 100, "speed_limit": 10, "bidir": True},
        {"id": 12, "from": 2, "to": 3, "length": 100, "speed_limit": 10, "bidir": True},
        {"id": 13, "from": 3, "to": 0, "length": 100, "speed_limit": 10, "bidir": True},
    ],
}


def line(length=1000.0, limit=13.89):
    return RoadNetwork.from_dict({
        "nodes": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": length, "y": 0}],
        "edges": [{"id": "e", "from": "a", "to": "b", "length": length,
                   "speed_limit": limit, "bidir": False}],
    })


def random_network(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, (n, 2))
    nodes = {k: tuple(pts[k]) for k in range(n)}
    edges = {}
    eid = 0
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.35:
                d = math.dist(pts[a], pts[b])
                # integer stretch factors keep some lengths tied
                edges[eid] = Edge(eid, a, b, math.ceil(d) + float(rng.integers(0, 3)), 10.0,
                                  bool(rng.random() < 0.7))
                eid += 1
    return RoadNetwork(nodes, edges)


def enumerate_best(net, s, t):
    """Exhaustive DFS over simple paths: (min length, lexicographically smallest route)."""
    best = [math.inf, None]

    def dfs(node, seen, route, dist):
        if node == t:
            if dist < best[0] - 1e-9 or (abs(dist - best[0]) <= 1e-9 and route < best[1]):
                best[0], best[1] = dist, list(route)
            return
        for eid, nxt in net.neighbors(node):
            if nxt not in seen:
                seen.add(nxt)
                route.append(eid)
                dfs(nxt, seen, route, dist + net.edges[eid].length)
                route.pop()
                seen.discard(nxt)

    dfs(s, {s}, [], 0.0)
    return best


# -- network file ----------------------------------------------------------

def test_two_node_network(tmp_path):
    p = tmp_path / "net.json"
    p.write_text(json.dumps({
        "nodes": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 30, "y": 40}],
        "edges": [{"id": 7, "from": 1, "to": 2, "length": 50, "speed_limit": 8, "bidir": True}],
    }))
    net = RoadNetwork.load(p)
    assert len(net.edges) == 1 and net.edges[7].length == 50


def test_missing_node_rejected():
    bad = {"nodes": [{"id": 1, "x": 0, "y": 0}],
           "edges": [{"id": 7, "from": 1, "to": 9, "length": 5, "speed_limit": 8}]}
    with pytest.raises(NetworkError):
        RoadNetwork.from_dict(bad)


def test_square_fixture():
    net = RoadNetwork.from_dict(SQUARE)
    assert len(net.nodes) == 4 and len(net.edges) == 4


def test_invalid_edges_rejected():
    for patch in ({"speed_limit": 0}, {"length": 50}, {"length": -1}):
        d = json.loads(json.dumps(SQUARE))
        d["edges"][0].update(patch)
        with pytest.raises(NetworkError):
            RoadNetwork.from_dict(d)


def test_polyline_length_allowed_and_round_trip():
    d = json.loads(json.dumps(SQUARE))
    d["edges"][0]["length"] = 130.0
    net = RoadNetwork.from_dict(d)
    back = RoadNetwork.from_dict(json.loads(json.dumps(net.to_dict())))
    assert back.edges == net.edges and back.nodes == net.nodes


# -- routing ---------------------------------------------------------------

def test_route_to_self_is_empty():
    assert shortest_path(RoadNetwork.from_dict(SQUARE), 2, 2) == []


def test_parallel_edges_pick_shorter():
    net = RoadNetwork({0: (0, 0), 1: (10, 0)},
                      {"long": Edge("long", 0, 1, 12.0, 5.0), "short": Edge("short", 0, 1, 10.0, 5.0)})
    assert shortest_path(net, 0, 1) == ["short"]


def test_square_opposite_corners_tie_break():
    net = RoadNetwork.from_dict(SQUARE)
    # 0 -> 2: [10, 11] or [13, 12]; both 200 m, smallest first edge wins
    assert shortest_path(net, 0, 2) == [10, 11]
    assert net.route_length(shortest_path(net, 0, 2)) == 200
    assert shortest_path(net, 2, 0) == [11, 10]


def test_unreachable_and_unknown():
    net = RoadNetwork({0: (0, 0), 1: (10, 0), 2: (50, 50)}, {0: Edge(0, 0, 1, 10.0, 5.0)})
    assert shortest_path(net, 1, 0) is None  # one-way
    assert shortest_path(net, 0, 2) is None
    with pytest.raises(NetworkError):
        shortest_path(net, 0, 99)
    with pytest.raises(NetworkError):
        plan_route(net, [0, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 12))
def test_dijkstra_matches_exhaustive_enumeration(seed, n):
    net = random_network(seed, n)
    for t in range(1, n):
        got = shortest_path(net, 0, t)
        length, route = enumerate_best(net, 0, t)
        if route is None:
            assert got is None
        else:
            assert net.route_length(got) == pytest.approx(length, abs=1e-9)
            assert got == route


# -- kinematics ------------------------------------------------------------

def test_linear_ramp_then_cap():
    net = line()
    s = start_state(net, ["e"], "a")
    seq = []
    for _ in range(8):
        s = step(s, net, 1.0)
        seq.append(s.velocity)
    assert seq[:5] == pytest.approx([2.5, 5.0, 7.5, 10.0, 12.5])
    assert seq[5:] == pytest.approx([13.89] * 3)


def test_offset_advances_by_limit_at_cruise():
    net = line()
    s = start_state(net, ["e"], "a")
    s = replace(s, velocity=13.89, edge_offset=100.0)
    nxt = step(s, net, 1.0)
    assert nxt.edge_offset - s.edge_offset == pytest.approx(13.89, abs=1e-12)


def test_route_end_is_absorbing():
    net = line(50.0)
    s = start_state(net, ["e"], "a")
    for _ in range(500):
        s = step(s, net, 0.1)
    assert is_finished(s, net) and s.velocity == 0.0
    assert s.position == (50.0, 0.0)
    assert step(s, net, 0.1) == s
    assert s.odometer == pytest.approx(50.0)


def test_bad_dt():
    net = line()
    with pytest.raises(ValueError):
        step(start_state(net, ["e"], "a"), net, 0.0)


def test_trajectory_length_and_zero_duration():
    net = line()
    s0 = start_state(net, ["e"], "a")
    assert len(sample_trajectory(s0, net, 0.1, 0.0)) == 1
    assert len(sample_trajectory(s0, net, 0.1, 12.34)) == 124
    traj = sample_trajectory(start_state(net, [], "a"), net, 0.1, 5.0)
    assert {p for _, p, _ in traj} == {(0.0, 0.0)}


def drive(net, route, start, dt=0.1, limit=100_000):
    s = start_state(net, route, start)
    states = [s]
    while not is_finished(s, net) and len(states) < limit:
        s = step(s, net, dt)
        states.append(s)
    return states


def test_arc_length_matches_velocity_integral():
    net = line(300.0)
    states = drive(net, ["e"], "a")
    dt = 0.1
    for a, b in zip(states, states[1:-1]):
        assert abs(math.dist(a.position, b.position) - b.velocity * dt) <= 2.5 * dt * dt
    arc = sum(math.dist(a.position, b.position) for a, b in zip(states, states[1:]))
    assert arc == pytest.approx(300.0, abs=1e-9)


def test_odometer_equals_route_length(shipped_config):
    net = shipped_config.network()
    route = plan_route(net, [0, 35, 5])
    assert drive(net, route, 0)[-1].odometer == pytest.approx(net.route_length(route))


def test_position_continuity_and_speed_bounds(shipped_config):
    net = shipped_config.network()
    states = drive(net, plan_route(net, [0, 35, 5, 30]), 0)
    for a, b in zip(states, states[1:]):
        assert math.dist(a.position, b.position) <= net.v_max * 0.1 + 1e-9
        assert 0 <= b.velocity <= net.v_max + 1e-12
        assert 0 <= b.edge_offset <= net.edges[b.current_edge].length + 1e-9


def test_route_conservation(shipped_config):
    net = shipped_config.network()
    route = plan_route(net, [0, 35, 5, 30])
    traversed = []
    for s in drive(net, route, 0):
        # a U-turn re-enters the same edge in the other direction
        key = (s.current_edge, s.reverse)
        if not traversed or traversed[-1] != key:
            traversed.append(key)
    assert [e for e, _ in traversed] == route

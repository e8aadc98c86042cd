"""Road network, shortest-path routing and a bounded-acceleration vehicle."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, replace
from typing import Hashable

A_MAX = 2.5  # m/s^2
DECEL = 4.0  # m/s^2, braking towards the route end and onto slower edges
LENGTH_TOL = 1e-6


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: Hashable
    source: Hashable
    target: Hashable
    length: float
    speed_limit: float
    bidir: bool = False


def _id_key(value):
    # ints sort numerically and before strings
    return (1, value) if isinstance(value, str) else (0, value)


class RoadNetwork:
    def __init__(self, nodes: dict, edges: dict):
        self.nodes = {k: (float(x), float(y)) for k, (x, y) in nodes.items()}
        self.edges = dict(edges)
        self._adjacency: dict = {n: [] for n in self.nodes}
        for e in self.edges.values():
            for end in (e.source, e.target):
                if end not in self.nodes:
                    raise NetworkError(f"edge {e.id!r} references missing node {end!r}")
            if not e.speed_limit > 0:
                raise NetworkError(f"edge {e.id!r}: speed limit must be positive")
            straight = math.dist(self.nodes[e.source], self.nodes[e.target])
            if not e.length > 0:
                raise NetworkError(f"edge {e.id!r}: length must be positive")
            if e.length < straight - LENGTH_TOL:
                raise NetworkError(
                    f"edge {e.id!r}: length {e.length} shorter than node distance {straight}"
                )
            self._adjacency[e.source].append((e.id, e.target))
            if e.bidir:
                self._adjacency[e.target].append((e.id, e.source))
        for adj in self._adjacency.values():
            adj.sort(key=lambda pair: _id_key(pair[0]))

    @classmethod
    def from_dict(cls, data: dict) -> "RoadNetwork":
        try:
            nodes = {n["id"]: (n["x"], n["y"]) for n in data["nodes"]}
            edges = {}
            for e in data["edges"]:
                if e["id"] in edges:
                    raise NetworkError(f"duplicate edge id {e['id']!r}")
                src, dst = e["from"], e["to"]
                length = e.get("length")
                if length is None:
                    if src not in nodes or dst not in nodes:
                        raise NetworkError(f"edge {e['id']!r} references a missing node")
                    length = math.dist(nodes[src], nodes[dst])
                edges[e["id"]] = Edge(
                    e["id"], src, dst, float(length), float(e["speed_limit"]),
                    bool(e.get("bidir", False)),
                )
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed road network: {exc!r}") from exc
        return cls(nodes, edges)

    @classmethod
    def load(cls, path) -> "RoadNetwork":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise NetworkError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": k, "x": x, "y": y} for k, (x, y) in self.nodes.items()],
            "edges": [
                {"id": e.id, "from": e.source, "to": e.target, "length": e.length,
                 "speed_limit": e.speed_limit, "bidir": e.bidir}
                for e in self.edges.values()
            ],
        }

    def neighbors(self, node):
        """(edge id, next node) pairs leaving ``node``, ordered by edge id."""
        return self._adjacency[node]

    @property
    def v_max(self) -> float:
        return max((e.speed_limit for e in self.edges.values()), default=0.0)

    def route_length(self, route) -> float:
        return sum(self.edges[e].length for e in route)


def shortest_path(network: RoadNetwork, source, target) -> list | None:
    """Minimum-length route as a list of edge ids, or None if unreachable.

    Among equally long routes the lexicographically smallest edge-id sequence
    wins, so the first differing edge is always the one with the smaller id.
    """
    for n in (source, target):
        if n not in network.nodes:
            raise NetworkError(f"unknown node {n!r}")
    if source == target:
        return []
    # heap entries carry the keyed path; lexicographic order is preserved under
    # extension because all edge lengths are positive
    heap = [(0.0, (), source, ())]
    done = set()
    while heap:
        dist, keyed, node, path = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == target:
            return list(path)
        for edge_id, nxt in network.neighbors(node):
            if nxt in done:
                continue
            heapq.heappush(
                heap,
                (dist + network.edges[edge_id].length, keyed + (_id_key(edge_id),),
                 nxt, path + (edge_id,)),
            )
    return None


@dataclass(frozen=True)
class VehicleState:
    position: tuple[float, float]
    velocity: float
    current_edge: Hashable | None
    edge_offset: float
    route: tuple = ()
    reverse: bool = False  # travelling current_edge from target to source
    odometer: float = 0.0


def _exit_node(edge: Edge, reverse: bool):
    return edge.source if reverse else edge.target


def _orient(edge: Edge, entry) -> bool:
    if edge.source == entry:
        return False
    if edge.bidir and edge.target == entry:
        return True
    raise NetworkError(f"edge {edge.id!r} does not continue from node {entry!r}")


def _point_on(network: RoadNetwork, edge: Edge, reverse: bool, offset: float):
    a = network.nodes[edge.source]
    b = network.nodes[edge.target]
    if reverse:
        a, b = b, a
    f = min(max(offset / edge.length, 0.0), 1.0)
    return (a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f)


def start_state(network: RoadNetwork, route, start_node) -> VehicleState:
    """Vehicle at rest at ``start_node`` about to follow ``route``."""
    route = tuple(route)
    if not route:
        return VehicleState(network.nodes[start_node], 0.0, None, 0.0)
    entry = start_node
    for eid in route:  # validate continuity up front
        edge = network.edges[eid]
        entry = _exit_node(edge, _orient(edge, entry))
    first = network.edges[route[0]]
    return VehicleState(
        network.nodes[start_node], 0.0, first.id, 0.0, route[1:], _orient(first, start_node)
    )


def is_finished(state: VehicleState, network: RoadNetwork) -> bool:
    if state.current_edge is None:
        return True
    return not state.route and state.edge_offset >= network.edges[state.current_edge].length


def _remaining_within(state, network, horizon):
    """Distance to route end, or ``horizon`` if it is at least that far."""
    d = network.edges[state.current_edge].length - state.edge_offset
    for eid in state.route:
        if d >= horizon:
            return horizon
        d += network.edges[eid].length
    return min(d, horizon)


def step(
    state: VehicleState,
    network: RoadNetwork,
    dt: float,
    a_max: float = A_MAX,
    decel: float = DECEL,
) -> VehicleState:
    """Advance the vehicle by ``dt`` seconds.

    Velocity approaches the current edge's speed limit at most ``a_max`` per
    second (braking at ``decel``) and is capped by the stopping envelope
    ``sqrt(2 * decel * distance_left)``. The position then advances by the new
    velocity times ``dt``; a vehicle reaching its route end stops there.
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if is_finished(state, network):
        return replace(state, velocity=0.0) if state.velocity else state

    edge = network.edges[state.current_edge]
    v = state.velocity
    limit = edge.speed_limit
    braking = v * v / (2.0 * decel) + (v + a_max * dt) * dt
    d_rem = _remaining_within(state, network, braking)
    target = min(limit, math.sqrt(2.0 * decel * d_rem)) if d_rem < braking else limit
    if v < target:
        v_new = min(target, v + a_max * dt)
    else:
        v_new = max(target, v - decel * dt)

    advance = v_new * dt
    offset = state.edge_offset + advance
    route = state.route
    reverse = state.reverse
    while offset > edge.length and route:
        offset -= edge.length
        entry = _exit_node(edge, reverse)
        edge = network.edges[route[0]]
        route = route[1:]
        reverse = _orient(edge, entry)
    if offset >= edge.length and not route:
        advance -= offset - edge.length
        offset = edge.length
        v_new = 0.0
    return VehicleState(
        _point_on(network, edge, reverse, offset), v_new, edge.id, offset, route, reverse,
        state.odometer + advance,
    )


def sample_trajectory(state0: VehicleState, network: RoadNetwork, dt: float, duration: float):
    """[(t, position, velocity), ...] on the grid t = 0, dt, 2 dt, ..."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = int(math.floor(duration / dt + 1e-9))
    out = [(0.0, state0.position, state0.velocity)]
    state = state0
    for k in range(1, n + 1):
        state = step(state, network, dt)
        out.append((k * dt, state.position, state.velocity))
    return out


def plan_route(network: RoadNetwork, waypoints) -> list:
    """Concatenated shortest paths through consecutive waypoints."""
    route = []
    for a, b in zip(waypoints, waypoints[1:]):
        leg = shortest_path(network, a, b)
        if leg is None:
            raise NetworkError(f"no route from {a!r} to {b!r}")
        route.extend(leg)
    return route

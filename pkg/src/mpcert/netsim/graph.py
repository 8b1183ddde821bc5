"""Radio connectivity and path algorithms on undirected node graphs.

Graphs are plain ``dict[node, set[node]]`` adjacency maps.  Every routine
iterates neighbours in ascending id order so results are deterministic.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

Graph = Dict[int, Set[int]]
Route = Tuple[int, ...]


def connectivity_graph(positions: np.ndarray | Sequence[Sequence[float]], radio_range: float) -> Graph:
    """Unit-disk graph: an edge wherever two nodes are within ``radio_range``."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    graph: Graph = {i: set() for i in range(n)}
    if n < 2:
        return graph
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    close = d2 <= radio_range * radio_range
    np.fill_diagonal(close, False)
    rows, cols = np.nonzero(np.triu(close))
    for u, v in zip(rows.tolist(), cols.tolist()):
        graph[u].add(v)
        graph[v].add(u)
    return graph


def from_edges(nodes: Iterable[int], edges: Iterable[Tuple[int, int]]) -> Graph:
    graph: Graph = {v: set() for v in nodes}
    for u, v in edges:
        if u == v:
            continue
        graph.setdefault(u, set()).add(v)
        graph.setdefault(v, set()).add(u)
    return graph


def has_edge(graph: Mapping[int, Set[int]], u: int, v: int) -> bool:
    return v in graph.get(u, ())


def bfs_distances(graph: Mapping[int, Set[int]], source: int, limit: Optional[int] = None) -> Dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if limit is not None and dist[u] >= limit:
            continue
        for v in sorted(graph.get(u, ())):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def bfs_ball(graph: Mapping[int, Set[int]], source: int, radius: int) -> Set[int]:
    """Nodes at hop distance 1..radius from ``source``."""
    return {v for v, d in bfs_distances(graph, source, radius).items() if 0 < d <= radius}


def shortest_route(graph: Mapping[int, Set[int]], source: int, dest: int) -> Optional[Route]:
    """Minimum-hop route; among equals, the lexicographically smallest sequence."""
    if source == dest:
        return (source,)
    to_dest = bfs_distances(graph, dest)
    if source not in to_dest:
        return None
    route = [source]
    u = source
    while u != dest:
        want = to_dest[u] - 1
        u = min(v for v in graph[u] if to_dest.get(v) == want)
        route.append(u)
    return tuple(route)


def route_is_valid(graph: Mapping[int, Set[int]], route: Sequence[int]) -> bool:
    return all(has_edge(graph, a, b) for a, b in zip(route, route[1:]))


def node_disjoint_paths(graph: Mapping[int, Set[int]], source: int, dest: int, k: Optional[int] = None) -> List[Route]:
    """Up to ``k`` internally vertex-disjoint source-dest routes.

    Unit-capacity max flow on the node-split graph (each relay ``v`` becomes
    ``v_in -> v_out`` with capacity 1), augmented along BFS-shortest paths
    in sorted order, then decomposed into routes.  The residual graph is
    never materialised; arcs are generated from ``graph`` and the current
    flow.  Returns ``min(k, vertex connectivity)`` routes sorted by
    (length, sequence).
    """
    if source == dest:
        raise ValueError("source and dest must differ")
    if source not in graph or dest not in graph:
        return []
    limit = len(graph) if k is None else k
    # flow on edge arcs out(u) -> in(v), and which relays carry a unit
    succ: Dict[int, Set[int]] = {}
    pred: Dict[int, Set[int]] = {}
    through: Set[int] = set()
    s, t = source, dest
    IN, OUT = 0, 1

    def arcs(state: Tuple[int, int]) -> List[Tuple[int, int]]:
        v, side = state
        nxt: List[Tuple[int, int]] = []
        if side == OUT:
            if v != t:
                used = succ.get(v, ())
                nxt.extend((w, IN) for w in sorted(graph[v]) if w != s and w not in used)
            if v in through:
                nxt.append((v, IN))  # cancel the relay's unit
        else:
            if v not in (s, t) and v not in through:
                nxt.append((v, OUT))
            nxt.extend((u, OUT) for u in sorted(pred.get(v, ())))  # cancel u -> v
        return nxt

    flow = 0
    start, goal = (s, OUT), (t, IN)
    while flow < limit:
        parent: Dict[Tuple[int, int], Tuple[int, int]] = {start: start}
        queue = deque([start])
        while queue and goal not in parent:
            a = queue.popleft()
            for b in arcs(a):
                if b not in parent:
                    parent[b] = a
                    if b == goal:
                        break
                    queue.append(b)
        if goal not in parent:
            break
        b = goal
        while b != start:
            a = parent[b]
            (av, aside), (bv, bside) = a, b
            if aside == OUT and bside == IN and av != bv:
                succ.setdefault(av, set()).add(bv)
                pred.setdefault(bv, set()).add(av)
            elif aside == IN and bside == OUT and av == bv:
                through.add(av)
            elif aside == OUT and bside == IN:
                through.discard(av)
            else:  # in(v) -> out(u): undo flow u -> v
                succ[bv].discard(av)
                pred[av].discard(bv)
            b = a
        flow += 1

    routes: List[Route] = []
    for first in sorted(succ.get(s, ())):
        path = [s, first]
        u = first
        while u != t:
            u = min(succ[u])
            path.append(u)
        routes.append(tuple(path))
    routes.sort(key=lambda r: (len(r), r))
    return routes


def paths_internally_disjoint(routes: Sequence[Sequence[int]]) -> bool:
    seen: Set[int] = set()
    for r in routes:
        inner = set(r[1:-1])
        if len(inner) != len(r) - 2 or seen & inner:
            return False
        seen |= inner
    return True

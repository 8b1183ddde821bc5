"""The simulation world: clock, events, mobility, connectivity and transport."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import graph as g
from .events import EventQueue
from .mobility import WaypointState, initial_state, waypoint_step
from .trace import Trace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 100
    area: Tuple[float, float] = (1500.0, 1500.0)
    duration: float = 120.0
    max_speed: float = 10.0
    pause_time: float = 30.0
    radio_range: float = 250.0
    per_hop_latency: float = 0.01
    rng_seed: int = 1
    mobility_tick: float = 1.0

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count must be positive")
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ConfigError("area dimensions must be positive")
        for name in ("duration", "max_speed", "radio_range", "per_hop_latency", "mobility_tick"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.pause_time < 0:
            raise ConfigError("pause_time must be non-negative")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")


def derive_rng(seed: int, *purpose: object) -> random.Random:
    """Independent, reproducible stream for one purpose within one run."""
    tag = ":".join(str(p) for p in (seed,) + purpose).encode()
    return random.Random(int.from_bytes(hashlib.sha256(tag).digest()[:8], "big"))


@dataclass
class FloodHandle:
    origin: int
    ttl: int
    reached: Set[int] = field(default_factory=set)
    transmissions: int = 0


RelayFilter = Callable[[int, Any], Tuple[str, Any]]
FloodReceiver = Callable[[int, Any, Tuple[int, ...], int], bool]


class SimWorld:
    """Single-threaded discrete-event world.

    Pass ``graph`` for a fixed topology (no mobility); otherwise node
    positions follow random waypoint and connectivity is refreshed every
    ``mobility_tick`` seconds.
    """

    def __init__(
        self,
        config: SimConfig,
        graph: Optional[g.Graph] = None,
        positions: Optional[Sequence[Tuple[float, float]]] = None,
        trace: bool = True,
    ) -> None:
        config.validate()
        self.config = config
        self.clock = 0.0
        self.events = EventQueue()
        self.trace = Trace(enabled=trace)
        self.route_caches: Dict[int, Dict[int, g.Route]] = {v: {} for v in range(config.node_count)}
        self.relay_filter: Optional[RelayFilter] = None
        self.static = graph is not None
        self.mobility: List[WaypointState] = []
        self._mob_rng = derive_rng(config.rng_seed, "mobility")
        if graph is not None:
            self.graph: g.Graph = {v: set(graph.get(v, ())) for v in range(config.node_count)}
        else:
            if positions is not None:
                if len(positions) != config.node_count:
                    raise ConfigError("positions must list every node")
                self.mobility = [
                    WaypointState(x, y, x, y, config.max_speed, pause_left=float("inf")) for x, y in positions
                ]
            else:
                self.mobility = [
                    initial_state(self._mob_rng, config.area, config.max_speed) for _ in range(config.node_count)
                ]
                self.events.push(config.mobility_tick, self._mobility_tick)
            self.graph = g.connectivity_graph(self.positions(), config.radio_range)

    # clock / scheduling ----------------------------------------------------

    @property
    def now(self) -> float:
        return self.clock

    @property
    def nodes(self) -> range:
        return range(self.config.node_count)

    def schedule(self, delay: float, fn: Callable[..., Any], *args: Any) -> None:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        self.events.push(self.clock + delay, fn, *args)

    def schedule_at(self, time: float, fn: Callable[..., Any], *args: Any) -> None:
        self.events.push(max(time, self.clock), fn, *args)

    def run(self, until: float, stop_when: Optional[Callable[[], bool]] = None) -> "SimWorld":
        if until < self.clock:
            raise ValueError("until lies before the current clock")
        while self.events and self.events.peek_time() <= until:
            time, fn, args = self.events.pop()
            self.clock = time
            fn(*args)
            if stop_when is not None and stop_when():
                return self
        self.clock = until
        return self

    # mobility ----------------------------------------------------------------

    def positions(self) -> np.ndarray:
        if not self.mobility:
            return np.zeros((0, 2))
        return np.array([m.position for m in self.mobility], dtype=float)

    def _mobility_tick(self) -> None:
        cfg = self.config
        for m in self.mobility:
            waypoint_step(m, self._mob_rng, cfg.mobility_tick, cfg.area, cfg.max_speed, cfg.pause_time)
        self.graph = g.connectivity_graph(self.positions(), cfg.radio_range)
        self._invalidate_routes()
        self.events.push(self.clock + cfg.mobility_tick, self._mobility_tick)

    def set_graph(self, graph: g.Graph) -> None:
        """Replace the topology (tests and scripted scenarios)."""
        self.graph = {v: set(graph.get(v, ())) for v in self.nodes}
        self._invalidate_routes()

    def _invalidate_routes(self) -> None:
        for node in self.nodes:
            cache = self.route_caches[node]
            stale = [d for d, r in cache.items() if not g.route_is_valid(self.graph, r)]
            for d in stale:
                del cache[d]
                self.trace.emit(self.clock, "route_invalidated", node, d)

    # routing -----------------------------------------------------------------

    def learn_route(self, route: Sequence[int]) -> None:
        """Cache ``route`` (and its prefixes) at ``route[0]``, keeping shorter ones."""
        cache = self.route_caches[route[0]]
        for j in range(1, len(route)):
            dest = route[j]
            known = cache.get(dest)
            if known is None or len(known) > j + 1:
                cache[dest] = tuple(route[: j + 1])

    def cached_route(self, source: int, dest: int) -> Optional[g.Route]:
        return self.route_caches[source].get(dest)

    def discover_route(self, source: int, dest: int) -> Optional[g.Route]:
        cached = self.cached_route(source, dest)
        if cached is not None:
            return cached
        route = g.shortest_route(self.graph, source, dest)
        if route is None:
            self.trace.emit(self.clock, "route_discovery", source, dest, outcome="unreachable")
            return None
        self.route_caches[source][dest] = route
        self.trace.emit(self.clock, "route_discovery", source, dest, outcome="found", detail=_fmt_route(route))
        return route

    def node_disjoint_paths(self, source: int, dest: int, k: int) -> List[g.Route]:
        return g.node_disjoint_paths(self.graph, source, dest, k)

    # transport ---------------------------------------------------------------

    def flood(self, origin: int, payload: Any, ttl: int, on_receive: FloodReceiver,
              request: Optional[Tuple[int, int]] = None) -> FloodHandle:
        """Hop-limited broadcast.

        ``on_receive(node, payload, path, ttl)`` runs once per node on first
        arrival (``ttl`` is the budget the copy arrived with) and returns
        whether that node rebroadcasts.
        """
        if ttl < 1:
            raise ValueError("ttl must be >= 1")
        handle = FloodHandle(origin, ttl)
        seen = {origin}
        self.trace.emit(self.clock, "flood_start", origin, request=request, detail=f"ttl={ttl}")
        self._broadcast(origin, payload, ttl, (origin,), handle, seen, on_receive)
        return handle

    def _broadcast(self, u, payload, ttl, path, handle, seen, on_receive) -> None:
        handle.transmissions += 1
        lat = self.config.per_hop_latency
        for v in sorted(self.graph[u]):
            self.events.push(self.clock + lat, self._flood_arrive, v, payload, ttl, path, handle, seen, on_receive)

    def _flood_arrive(self, v, payload, ttl, path, handle, seen, on_receive) -> None:
        if v in seen:
            return
        seen.add(v)
        handle.reached.add(v)
        here = path + (v,)
        self.learn_route(tuple(reversed(here)))
        if on_receive(v, payload, here, ttl) and ttl - 1 >= 1:
            self._broadcast(v, payload, ttl - 1, here, handle, seen, on_receive)

    def unicast(
        self,
        route: Sequence[int],
        payload: Any,
        on_deliver: Callable[[Any, Tuple[int, ...]], None],
        on_drop: Optional[Callable[[Any, int, str], None]] = None,
        kind: str = "unicast",
        request: Optional[Tuple[int, int]] = None,
    ) -> None:
        """Source-routed delivery, one ``per_hop_latency`` per hop.

        A hop fails if its link is gone when it is sent; relays pass the
        payload through ``relay_filter`` (adversaries may drop or rewrite).
        """
        route = tuple(route)
        if len(route) == 1:
            on_deliver(payload, route)
            return
        self._send_hop(route, 0, payload, on_deliver, on_drop, kind, request)

    def _send_hop(self, route, i, payload, on_deliver, on_drop, kind, request) -> None:
        u, v = route[i], route[i + 1]
        if not g.has_edge(self.graph, u, v):
            self.trace.emit(self.clock, f"{kind}_drop", u, v, request, "link_break", _fmt_route(route))
            if on_drop is not None:
                on_drop(payload, u, "link_break")
            return
        self.events.push(self.clock + self.config.per_hop_latency, self._hop_arrive, route, i + 1, payload,
                         on_deliver, on_drop, kind, request)

    def _hop_arrive(self, route, j, payload, on_deliver, on_drop, kind, request) -> None:
        v = route[j]
        if j == len(route) - 1:
            on_deliver(payload, route)
            return
        if self.relay_filter is not None:
            action, payload = self.relay_filter(v, payload)
            if action == "drop":
                self.trace.emit(self.clock, f"{kind}_drop", v, route[-1], request, "adversary", _fmt_route(route))
                if on_drop is not None:
                    on_drop(payload, v, "adversary")
                return
            if action == "tamper":
                self.trace.emit(self.clock, f"{kind}_tamper", v, route[-1], request, "adversary", _fmt_route(route))
        self._send_hop(route, j, payload, on_deliver, on_drop, kind, request)


def _fmt_route(route: Sequence[int]) -> str:
    return "-".join(str(v) for v in route)

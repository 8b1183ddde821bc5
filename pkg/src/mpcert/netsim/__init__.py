"""Deterministic discrete-event MANET simulator."""

from .graph import (
    Graph,
    Route,
    bfs_ball,
    bfs_distances,
    connectivity_graph,
    from_edges,
    node_disjoint_paths,
    paths_internally_disjoint,
    shortest_route,
)
from .mobility import WaypointState, waypoint_step
from .trace import Trace, TraceRecord
from .world import ConfigError, FloodHandle, SimConfig, SimWorld, derive_rng

__all__ = [
    "ConfigError",
    "FloodHandle",
    "Graph",
    "Route",
    "SimConfig",
    "SimWorld",
    "Trace",
    "TraceRecord",
    "WaypointState",
    "bfs_ball",
    "bfs_distances",
    "connectivity_graph",
    "derive_rng",
    "from_edges",
    "node_disjoint_paths",
    "paths_internally_disjoint",
    "shortest_route",
    "waypoint_step",
]

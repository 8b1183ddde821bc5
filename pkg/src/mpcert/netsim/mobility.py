"""Random-waypoint mobility."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Tuple


@dataclass
class WaypointState:
    x: float
    y: float
    wx: float
    wy: float
    speed: float
    pause_left: float = 0.0

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)


def draw_waypoint(rng: random.Random, area: Tuple[float, float]) -> Tuple[float, float]:
    return (rng.uniform(0.0, area[0]), rng.uniform(0.0, area[1]))


def draw_speed(rng: random.Random, max_speed: float) -> float:
    # uniform on (0, max_speed]
    return max_speed * (1.0 - rng.random())


def initial_state(rng: random.Random, area: Tuple[float, float], max_speed: float) -> WaypointState:
    x, y = draw_waypoint(rng, area)
    wx, wy = draw_waypoint(rng, area)
    return WaypointState(x, y, wx, wy, draw_speed(rng, max_speed))


def waypoint_step(
    state: WaypointState,
    rng: random.Random,
    dt: float,
    area: Tuple[float, float],
    max_speed: float,
    pause_time: float,
) -> WaypointState:
    """Advance ``state`` by ``dt`` seconds in place and return it.

    A node travels to its waypoint at constant speed, pauses for
    ``pause_time`` on arrival, then draws a fresh waypoint and speed.
    Several legs may complete inside one step.
    """
    left = dt
    while left > 0:
        if state.pause_left > 0:
            used = min(left, state.pause_left)
            state.pause_left -= used
            left -= used
            if state.pause_left <= 0:
                state.pause_left = 0.0
                state.wx, state.wy = draw_waypoint(rng, area)
                state.speed = draw_speed(rng, max_speed)
            continue
        dx, dy = state.wx - state.x, state.wy - state.y
        dist = math.hypot(dx, dy)
        reach = state.speed * left
        if reach < dist:
            f = reach / dist
            state.x += dx * f
            state.y += dy * f
            left = 0.0
        else:
            state.x, state.y = state.wx, state.wy
            left -= dist / state.speed if state.speed > 0 else left
            state.pause_left = pause_time
            if pause_time <= 0:
                state.wx, state.wy = draw_waypoint(rng, area)
                state.speed = draw_speed(rng, max_speed)
    state.x = min(max(state.x, 0.0), area[0])
    state.y = min(max(state.y, 0.0), area[1])
    return state

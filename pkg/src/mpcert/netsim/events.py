from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable, List, Tuple


class EventQueue:
    """Min-heap of callbacks keyed by (time, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: List[Tuple[float, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()

    def push(self, time: float, fn: Callable[..., Any], *args: Any) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), fn, args))

    def pop(self) -> Tuple[float, Callable[..., Any], tuple]:
        time, _, fn, args = heapq.heappop(self._heap)
        return time, fn, args

    def peek_time(self) -> float:
        return self._heap[0][0]

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

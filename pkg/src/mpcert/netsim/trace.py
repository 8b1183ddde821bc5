"""Append-only simulation trace, serialized as newline-delimited JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, List, Optional, Tuple

FIELDS = ("time", "kind", "node", "peer", "request", "outcome", "detail")


@dataclass(frozen=True)
class TraceRecord:
    time: float
    kind: str
    node: Optional[int] = None
    peer: Optional[int] = None
    request: Optional[Tuple[int, int]] = None
    outcome: Optional[str] = None
    detail: Optional[str] = None

    def to_json(self) -> str:
        # fixed key order and fixed time precision keep traces diffable
        body = {
            "time": f"{self.time:.6f}",
            "kind": self.kind,
            "node": self.node,
            "peer": self.peer,
            "request": None if self.request is None else f"{self.request[0]}:{self.request[1]}",
            "outcome": self.outcome,
            "detail": self.detail,
        }
        return json.dumps(body, separators=(",", ":"))


class Trace:
    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self.records: List[TraceRecord] = []

    def emit(self, time: float, kind: str, node: Optional[int] = None, peer: Optional[int] = None,
             request: Optional[Tuple[int, int]] = None, outcome: Optional[str] = None,
             detail: Optional[str] = None) -> None:
        if self.enabled:
            self.records.append(TraceRecord(time, kind, node, peer, request, outcome, detail))

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, kind: str) -> List[TraceRecord]:
        return [r for r in self.records if r.kind == kind]

    def lines(self) -> Iterable[str]:
        for r in self.records:
            yield r.to_json()

    def write(self, fh: IO[str]) -> None:
        for line in self.lines():
            fh.write(line)
            fh.write("\n")

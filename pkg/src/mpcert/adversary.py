"""Attacker behaviour: spurious certification and on-route dropping/tampering."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from .identity import (
    DEFAULT_SCHEME,
    NodeId,
    PublicKey,
    SignatureScheme,
    generate_keypair,
    issue_certificate,
    tampered,
)
from .netsim.world import derive_rng
from .protocol import Adversary, CertReply, CertRequest, NodeState

MAX_FRACTION = 0.4


class AttackerMode(enum.Enum):
    ISOLATED = "isolated"
    COLLUDING = "colluding"


@dataclass(frozen=True)
class AttackerConfig:
    mode: AttackerMode = AttackerMode.ISOLATED
    fraction: float = 0.0
    drop_replies: bool = False
    tamper_replies: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.fraction <= MAX_FRACTION:
            raise ValueError(f"attacker fraction must lie in [0, {MAX_FRACTION}], got {self.fraction!r}")


def attacker_count(fraction: float, node_count: int) -> int:
    # round half up: 0.1 * 100 must give exactly 10
    return int(math.floor(fraction * node_count + 0.5 + 1e-9))


def select_attackers(seed: int, fraction: float, node_count: int, excluded: Iterable[NodeId] = ()) -> List[NodeId]:
    """Seeded draw from the non-excluded nodes.

    The candidate order depends on ``seed`` only, so a larger fraction always
    picks a superset of a smaller one.
    """
    skip = set(excluded)
    pool = [v for v in range(node_count) if v not in skip]
    derive_rng(seed, "attackers").shuffle(pool)
    return sorted(pool[: min(len(pool), attacker_count(fraction, node_count))])


def isolated_spurious_key(attacker: NodeId, target: NodeId, salt: object = 0) -> PublicKey:
    return generate_keypair(repr(("isolated-spurious", salt, attacker, target))).public


def colluding_spurious_key(target: NodeId, salt: object = 0) -> PublicKey:
    return generate_keypair(repr(("colluding-spurious", salt, target))).public


def attacker_handle_creq(
    attacker: NodeState,
    creq: CertRequest,
    mode: AttackerMode,
    shared_spurious: Dict[NodeId, PublicKey],
    path: Sequence[NodeId],
    now: float,
    salt: object = 0,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> CertReply:
    """A validly signed reply binding ``creq.target`` to a key that is not its own."""
    if mode is AttackerMode.COLLUDING:
        if creq.target not in shared_spurious:
            shared_spurious[creq.target] = colluding_spurious_key(creq.target, salt)
        key = shared_spurious[creq.target]
    else:
        key = isolated_spurious_key(attacker.id, creq.target, salt)
    certs = (
        issue_certificate(attacker.keys, attacker.id, creq.target, key, now, scheme),
        issue_certificate(attacker.keys, attacker.id, attacker.id, attacker.keys.public, now, scheme),
    )
    return CertReply(creq.request_id, attacker.id, certs, tuple(reversed(path)))


def attacker_on_route(payload: object, config: AttackerConfig) -> Tuple[str, object]:
    """Relay decision for a payload crossing an attacker; only certificate replies are touched."""
    if not isinstance(payload, CertReply):
        return "pass", payload
    if config.drop_replies:
        return "drop", payload
    if config.tamper_replies:
        return "tamper", replace(payload, certificates=tuple(tampered(c) for c in payload.certificates))
    return "pass", payload


@dataclass
class AdversarySet(Adversary):
    """The attackers of one run, as seen by the protocol engine."""

    config: AttackerConfig
    attackers: Set[NodeId] = field(default_factory=set)
    salt: object = 0
    shared_spurious: Dict[NodeId, PublicKey] = field(default_factory=dict)
    scheme: SignatureScheme = DEFAULT_SCHEME

    def is_attacker(self, node: NodeId) -> bool:
        return node in self.attackers

    def reply(self, node: NodeState, creq: CertRequest, path: Sequence[NodeId], now: float) -> CertReply:
        return attacker_handle_creq(node, creq, self.config.mode, self.shared_spurious, path, now, self.salt, self.scheme)

    def on_route(self, node: NodeId, payload: object) -> Tuple[str, object]:
        if node not in self.attackers:
            return "pass", payload
        return attacker_on_route(payload, self.config)

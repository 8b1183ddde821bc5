"""Per-node trust bookkeeping.

Evidence from independent certifiers is combined with the noisy-OR rule
``1 - prod(1 - t_i)``; for simple support functions on a single hypothesis
this is exactly what Dempster's rule yields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from .identity import Certificate, NodeId, PublicKey


class TrustError(ValueError):
    pass


def clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def _check_level(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise TrustError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class TrustParams:
    initial_known: float = 0.75
    initial_unknown: float = 0.5
    reward_delta: float = 0.05
    penalty_delta: float = 0.25
    mpktv: float = 0.7

    def __post_init__(self) -> None:
        for name in ("initial_known", "initial_unknown", "mpktv"):
            _check_level(name, getattr(self, name))
        if self.reward_delta < 0 or self.penalty_delta < 0:
            raise TrustError("trust deltas must be non-negative")
        if self.penalty_delta < self.reward_delta:
            raise TrustError("penalty_delta must be >= reward_delta")


@dataclass
class TrustStore:
    owner: NodeId
    trust: Dict[NodeId, float] = field(default_factory=dict)
    certifiers: Set[NodeId] = field(default_factory=set)
    certificates_held: Dict[NodeId, List[Certificate]] = field(default_factory=dict)
    default: float = 0.5

    def level(self, peer: NodeId) -> float:
        return self.trust.get(peer, self.default)

    def set_level(self, peer: NodeId, value: float) -> None:
        self.trust[peer] = clamp(value)

    def add_certifier(self, peer: NodeId, level: float) -> None:
        self.certifiers.add(peer)
        self.trust[peer] = max(self.trust.get(peer, 0.0), clamp(level))

    def hold(self, cert: Certificate) -> None:
        """Keep ``cert``, replacing any earlier one from the same issuer."""
        held = [c for c in self.certificates_held.get(cert.subject, []) if c.issuer != cert.issuer]
        held.append(cert)
        self.certificates_held[cert.subject] = held

    def held_by(self, subject: NodeId, issuer: NodeId) -> Certificate | None:
        for cert in self.certificates_held.get(subject, ()):
            if cert.issuer == issuer:
                return cert
        return None

    def drop_certificates(self, subject: NodeId) -> None:
        self.certificates_held.pop(subject, None)


def initial_trust(peer: NodeId, known: bool, params: TrustParams) -> float:
    del peer  # trust starts from the relationship only, not the identity
    return params.initial_known if known else params.initial_unknown


def aggregate_key_trust(certifier_trusts: Iterable[float]) -> float:
    values = sorted(certifier_trusts)
    if not values:
        raise TrustError("no evidence: certifier list is empty")
    for v in values:
        _check_level("certifier trust", v)
    # sorted so the float result does not depend on argument order
    return 1.0 - math.prod(1.0 - v for v in values)


def _exact_aggregate(levels: Iterable[float]) -> Fraction:
    rest = Fraction(1)
    for v in levels:
        rest *= 1 - Fraction(v)
    return 1 - rest


def meets_mpktv(aggregate: float, mpktv: float) -> bool:
    return aggregate >= mpktv


def resolve_conflict(
    candidates: Sequence[Tuple[PublicKey, Sequence[NodeId]]], store: TrustStore
) -> Tuple[PublicKey, float]:
    """Pick the key whose certifiers carry the most combined trust.

    Candidates are ranked on the exact rational value of the combination
    rule, so levels one ulp apart never collapse into a float tie. Ties go
    to the key with the smallest byte image so the result never depends on
    candidate order.
    """
    if not candidates:
        raise TrustError("no candidate keys")
    best: Tuple[Fraction, bytes] | None = None
    winner: Tuple[PublicKey, float] | None = None
    for key, certifiers in candidates:
        if not certifiers:
            raise TrustError(f"candidate {key!r} has no certifiers")
        levels = [store.level(c) for c in set(certifiers)]
        agg = aggregate_key_trust(levels)
        rank = (-_exact_aggregate(levels), key.data)
        if best is None or rank < best:
            best = rank
            winner = (key, agg)
    assert winner is not None
    return winner


def reward_certifiers(store: TrustStore, certifiers: Iterable[NodeId], params: TrustParams) -> TrustStore:
    for c in certifiers:
        store.set_level(c, store.level(c) + params.reward_delta)
    return store


def penalize_certifiers(store: TrustStore, certifiers: Iterable[NodeId], params: TrustParams) -> TrustStore:
    for c in certifiers:
        store.set_level(c, store.level(c) - params.penalty_delta)
    return store

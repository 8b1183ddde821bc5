"""Per-node certification state machine.

The decision logic (``handle_creq``, ``handle_crep``, ``escalate_ttl``,
``mutual_certify``, ``accept_rekey``) is written as functions over
``NodeState`` so it can be exercised without a network.
``CertificationProtocol`` wires those functions to a ``SimWorld``:
floods, source-routed replies, multi-path copies and timers.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .identity import (
    DEFAULT_SCHEME,
    Certificate,
    KeyPair,
    NodeId,
    PublicKey,
    SignatureScheme,
    generate_keypair,
    issue_certificate,
    sign_message,
    time_to_micros,
    verify_certificate,
    verify_message,
)
from .netsim.world import SimWorld
from .trust import (
    TrustParams,
    TrustStore,
    aggregate_key_trust,
    meets_mpktv,
    penalize_certifiers,
    resolve_conflict,
    reward_certifiers,
)

log = logging.getLogger(__name__)

RequestId = Tuple[NodeId, int]


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    initial_ttl: int = 2
    ttl_step: int = 2
    ttl_max: int = 16
    path_count: int = 2
    min_known_for_delegation: int = 1
    copy_grace: Optional[float] = None  # None: ttl_max hops of latency
    rekey_period: Optional[float] = None  # None: no periodic re-keying

    def validate(self) -> None:
        if self.initial_ttl < 1 or self.ttl_step < 1:
            raise ProtocolError("initial_ttl and ttl_step must be >= 1")
        if self.ttl_max < self.initial_ttl:
            raise ProtocolError("ttl_max must be >= initial_ttl")
        if self.path_count < 1:
            raise ProtocolError("path_count must be >= 1")
        if self.min_known_for_delegation < 0:
            raise ProtocolError("min_known_for_delegation must be >= 0")
        if self.rekey_period is not None and self.rekey_period <= 0:
            raise ProtocolError("rekey_period must be positive")


# -- wire messages --------------------------------------------------------------


@dataclass(frozen=True)
class CertRequest:
    request_id: RequestId
    origin: NodeId
    target: NodeId
    ttl: int
    origin_certifiers: Tuple[NodeId, ...]
    origin_key: PublicKey
    join: bool = False


@dataclass(frozen=True)
class CertReply:
    request_id: RequestId
    responder: NodeId
    certificates: Tuple[Certificate, ...]
    path: Tuple[NodeId, ...]
    copies: int = 1

    @property
    def origin(self) -> NodeId:
        return self.path[-1]

    def canonical(self) -> bytes:
        """Bytes that every copy of one reply must share (the path differs)."""
        head = struct.pack(">IIII", self.request_id[0], self.request_id[1], self.responder, len(self.certificates))
        return head + b"".join(c.canonical() for c in self.certificates)


@dataclass(frozen=True)
class NotifyTarget:
    relay: NodeId
    origin: NodeId
    origin_key: PublicKey
    origin_certifiers: Tuple[NodeId, ...]
    request_id: RequestId
    signature: bytes = b""

    def payload(self) -> bytes:
        return (
            b"NOTIFY"
            + struct.pack(">IIII", self.relay, self.origin, self.request_id[0], self.request_id[1])
            + self.origin_key.data
            + b"".join(struct.pack(">I", c) for c in self.origin_certifiers)
        )


@dataclass(frozen=True)
class FirstPacket:
    origin: NodeId
    target: NodeId
    accepted_key: PublicKey
    origin_key: PublicKey
    certifiers: Tuple[NodeId, ...]
    origin_certifiers: Tuple[NodeId, ...]
    signature: bytes = b""

    def payload(self) -> bytes:
        return (
            b"FIRST"
            + struct.pack(">II", self.origin, self.target)
            + self.accepted_key.data
            + self.origin_key.data
            + struct.pack(">I", len(self.certifiers))
            + b"".join(struct.pack(">I", c) for c in self.certifiers)
            + b"".join(struct.pack(">I", c) for c in self.origin_certifiers)
        )


@dataclass(frozen=True)
class RekeyNotice:
    node: NodeId
    new_key: PublicKey
    epoch: int
    sent_at: float
    signature: bytes = b""

    def payload(self) -> bytes:
        return b"REKEY" + struct.pack(">IIQ", self.node, self.epoch, time_to_micros(self.sent_at)) + self.new_key.data


@dataclass(frozen=True)
class JoinOffer:
    responder: NodeId
    joiner: NodeId
    self_cert: Certificate
    joiner_cert: Certificate


# -- node state -------------------------------------------------------------------


class Status(enum.Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    FAILED = "failed"


@dataclass
class ExchangeState:
    origin: NodeId
    target: NodeId
    mpktv: float
    current_ttl: int
    started_at: float
    request_ids: List[RequestId] = field(default_factory=list)
    replies: List[CertReply] = field(default_factory=list)
    candidate_keys: Dict[PublicKey, Set[NodeId]] = field(default_factory=dict)
    status: Status = Status.PENDING
    accepted_key: Optional[PublicKey] = None
    accepted_at: Optional[float] = None
    aggregate: Optional[float] = None
    counted: bool = True

    @property
    def delay(self) -> Optional[float]:
        if self.accepted_at is None:
            return None
        return self.accepted_at - self.started_at

    @property
    def pending(self) -> bool:
        return self.status is Status.PENDING


@dataclass
class NodeState:
    id: NodeId
    keys: KeyPair
    trust_store: TrustStore
    mpktv: float = 0.7
    seen_requests: Dict[RequestId, bool] = field(default_factory=dict)
    exchanges: Dict[NodeId, ExchangeState] = field(default_factory=dict)
    peer_keys: Dict[NodeId, PublicKey] = field(default_factory=dict)
    revoked: List[PublicKey] = field(default_factory=list)
    rekey_period: Optional[float] = None
    key_seed: object = None
    epoch: int = 0
    next_seq: int = 0
    request_targets: Dict[RequestId, NodeId] = field(default_factory=dict)

    @classmethod
    def create(cls, node_id: NodeId, seed: object, params: TrustParams, mpktv: Optional[float] = None,
               scheme: SignatureScheme = DEFAULT_SCHEME) -> "NodeState":
        return cls(
            id=node_id,
            keys=generate_keypair(repr((seed, 0)), scheme),
            trust_store=TrustStore(owner=node_id, default=params.initial_unknown),
            mpktv=params.mpktv if mpktv is None else mpktv,
            key_seed=seed,
        )

    @property
    def certifiers(self) -> Set[NodeId]:
        return self.trust_store.certifiers

    def own_cert_for(self, subject: NodeId) -> Optional[Certificate]:
        return self.trust_store.held_by(subject, self.id)

    def new_request_id(self) -> RequestId:
        self.next_seq += 1
        return (self.id, self.next_seq)

    def exchange_for_request(self, request_id: RequestId) -> Optional[ExchangeState]:
        target = self.request_targets.get(request_id)
        return None if target is None else self.exchanges.get(target)


def install_mutual(a: NodeState, b: NodeState, now: float, params: TrustParams,
                   scheme: SignatureScheme = DEFAULT_SCHEME) -> None:
    """Both nodes certify each other's current key and join each other's K set."""
    for x, y in ((a, b), (b, a)):
        x.trust_store.hold(issue_certificate(x.keys, x.id, y.id, y.keys.public, now, scheme))
        x.trust_store.add_certifier(y.id, params.initial_known)
        x.peer_keys[y.id] = y.keys.public


# -- decision functions -------------------------------------------------------------


class Action(enum.Enum):
    FORWARD = "forward"
    REPLY = "reply"
    DROP = "drop"


@dataclass(frozen=True)
class CreqDecision:
    action: Action
    reply: Optional[CertReply] = None
    multipath: bool = False
    notify_target: bool = False
    forward_ttl: int = 0
    reason: str = ""


def _well_formed(creq: CertRequest) -> bool:
    if not isinstance(creq, CertRequest) or creq.ttl < 1:
        return False
    return creq.join or creq.origin != creq.target


def handle_creq(
    node: NodeState,
    creq: CertRequest,
    path: Sequence[NodeId],
    now: float,
    config: ProtocolConfig = ProtocolConfig(),
    has_route_to_target: bool = False,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> CreqDecision:
    """Decide what ``node`` does with an arriving CREQ.

    ``path`` runs from the origin to ``node``; ``creq.ttl`` is the hop budget
    the copy arrived with.  Rules, first match wins: duplicate -> drop;
    target that knows too few nodes -> reply itself; holder of its own
    certificate for the target -> reply (plus self-signed certificate and
    multi-path delivery when the origin is a stranger, plus a notice to the
    target when a route to it is cached); anything else -> forward with one
    hop less, or drop once the budget is spent.
    """
    if not _well_formed(creq) or not path or path[-1] != node.id or path[0] != creq.origin:
        return CreqDecision(Action.DROP, reason="malformed")
    rid = creq.request_id
    if rid in node.seen_requests:
        return CreqDecision(Action.DROP, reason="duplicate")
    node.seen_requests[rid] = False

    back = tuple(reversed(path))
    stranger = creq.origin not in node.certifiers

    if node.id == creq.target and len(node.certifiers) < config.min_known_for_delegation:
        own = issue_certificate(node.keys, node.id, node.id, node.keys.public, now, scheme)
        node.seen_requests[rid] = True
        reply = CertReply(rid, node.id, (own,), back)
        return CreqDecision(Action.REPLY, reply=reply, multipath=stranger, reason="target")

    held = node.own_cert_for(creq.target)
    if held is not None and node.id != creq.target:
        certs: Tuple[Certificate, ...] = (held,)
        if stranger:
            certs += (issue_certificate(node.keys, node.id, node.id, node.keys.public, now, scheme),)
        node.seen_requests[rid] = True
        reply = CertReply(rid, node.id, certs, back)
        return CreqDecision(
            Action.REPLY, reply=reply, multipath=stranger, notify_target=has_route_to_target, reason="certifier"
        )

    if creq.ttl - 1 < 1:
        return CreqDecision(Action.DROP, reason="ttl")
    return CreqDecision(Action.FORWARD, forward_ttl=creq.ttl - 1, reason="no_certificate")


def start_exchange(node: NodeState, target: NodeId, mpktv: float, initial_ttl: int, now: float,
                   counted: bool = True) -> Tuple[ExchangeState, Optional[CertRequest]]:
    """Open an exchange for ``target``'s key.

    Returns the new state and the CREQ to flood, or ``None`` for the CREQ
    when the key is already certified locally (accepted on the spot).
    """
    if target == node.id:
        raise ProtocolError("a node cannot run an exchange for its own key")
    if not 0.0 <= mpktv <= 1.0:
        raise ProtocolError(f"mpktv must lie in [0, 1], got {mpktv!r}")
    if initial_ttl < 1:
        raise ProtocolError("initial_ttl must be >= 1")
    existing = node.exchanges.get(target)
    if existing is not None and existing.pending:
        raise ProtocolError(f"exchange for {target} already pending at {node.id}")
    ex = ExchangeState(node.id, target, mpktv, initial_ttl, now, counted=counted)
    node.exchanges[target] = ex
    if target in node.certifiers and target in node.peer_keys:
        ex.status = Status.ACCEPTED
        ex.accepted_key = node.peer_keys[target]
        ex.accepted_at = now
        ex.aggregate = node.trust_store.level(target)
        return ex, None
    return ex, _new_round(node, ex, initial_ttl)


def _new_round(node: NodeState, ex: ExchangeState, ttl: int) -> CertRequest:
    rid = node.new_request_id()
    node.request_targets[rid] = ex.target
    node.seen_requests[rid] = False
    ex.request_ids.append(rid)
    ex.current_ttl = ttl
    return CertRequest(
        request_id=rid,
        origin=node.id,
        target=ex.target,
        ttl=ttl,
        origin_certifiers=tuple(sorted(node.certifiers)),
        origin_key=node.keys.public,
    )


def escalate_ttl(node: NodeState, ex: ExchangeState, config: ProtocolConfig) -> Optional[CertRequest]:
    """Next expanding-ring round, or ``None`` (no-op when settled, FAILED past ``ttl_max``)."""
    if not ex.pending:
        return None
    ttl = ex.current_ttl + config.ttl_step
    if ttl > config.ttl_max:
        ex.status = Status.FAILED
        return None
    return _new_round(node, ex, ttl)


def responder_key(node: NodeState, reply: CertReply, scheme: SignatureScheme = DEFAULT_SCHEME) -> Optional[PublicKey]:
    """Key to check the responder's signatures with: stored binding, else its self-signed certificate."""
    r = reply.responder
    if r in node.certifiers and r in node.peer_keys:
        return node.peer_keys[r]
    for cert in reply.certificates:
        if cert.self_signed and cert.issuer == r and verify_certificate(cert, cert.subject_key, scheme):
            return cert.subject_key
    return None


@dataclass(frozen=True)
class Acceptance:
    key: PublicKey
    aggregate: float
    winners: Tuple[NodeId, ...]
    losers: Tuple[NodeId, ...]


def handle_crep(
    node: NodeState,
    reply: CertReply,
    now: float,
    params: TrustParams,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> Tuple[Optional[ExchangeState], Optional[Acceptance], str]:
    """Fold a (consistency-checked) reply into its exchange.

    Returns the exchange (``None`` if unknown), the acceptance if this reply
    pushed the best key over the threshold, and a short outcome tag.
    """
    ex = node.exchange_for_request(reply.request_id)
    if ex is None or reply.request_id not in ex.request_ids:
        return None, None, "unknown_request"
    if not ex.pending:
        return ex, None, "settled"
    key = responder_key(node, reply, scheme)
    if key is None:
        return ex, None, "unverifiable"
    added = 0
    for cert in reply.certificates:
        if cert.subject != ex.target or cert.issuer != reply.responder:
            continue
        if not verify_certificate(cert, key, scheme):
            continue
        ex.candidate_keys.setdefault(cert.subject_key, set()).add(reply.responder)
        added += 1
    ex.replies.append(reply)
    if not added:
        return ex, None, "unverifiable"
    acc = evaluate_exchange(node, ex, now, params)
    return ex, acc, "accepted" if acc else "pending"


def evaluate_exchange(node: NodeState, ex: ExchangeState, now: float, params: TrustParams) -> Optional[Acceptance]:
    if not ex.pending or not ex.candidate_keys:
        return None
    candidates = [(k, sorted(c)) for k, c in ex.candidate_keys.items()]
    key, agg = resolve_conflict(candidates, node.trust_store)
    if not meets_mpktv(agg, ex.mpktv):
        return None
    winners = tuple(sorted(ex.candidate_keys[key]))
    losers = tuple(sorted(set().union(*(c for k, c in ex.candidate_keys.items() if k != key)) - set(winners)))
    ex.status = Status.ACCEPTED
    ex.accepted_key = key
    ex.accepted_at = now
    ex.aggregate = agg
    reward_certifiers(node.trust_store, winners, params)
    penalize_certifiers(node.trust_store, losers, params)
    return Acceptance(key, agg, winners, losers)


def mutual_certify(
    origin: NodeState,
    target: NodeState,
    accepted_key: PublicKey,
    origin_certifiers: Iterable[NodeId],
    now: float,
    params: TrustParams,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> Tuple[bool, str]:
    """Target's side of the first packet.

    The target weighs the origin's key by its own trust in the origin's
    certifiers (the origin itself when it has none) against its own
    threshold; on success both sides certify each other.
    """
    if accepted_key != target.keys.public:
        return False, "key_mismatch"
    evidence = sorted(set(origin_certifiers) - {target.id}) or [origin.id]
    agg = aggregate_key_trust(target.trust_store.level(c) for c in evidence)
    if not meets_mpktv(agg, target.mpktv):
        return False, f"below_threshold:{agg:.4f}"
    install_mutual(origin, target, now, params, scheme)
    return True, "certified"


def accept_rekey(peer: NodeState, notice: RekeyNotice, now: float,
                 scheme: SignatureScheme = DEFAULT_SCHEME) -> bool:
    """Peer side of a key update: must verify under the key on file."""
    stored = peer.peer_keys.get(notice.node)
    if stored is None or not verify_message(stored, notice.payload(), notice.signature, scheme):
        return False
    peer.peer_keys[notice.node] = notice.new_key
    peer.trust_store.drop_certificates(notice.node)
    peer.trust_store.hold(issue_certificate(peer.keys, peer.id, notice.node, notice.new_key, now, scheme))
    return True


def rekey(node: NodeState, now: float, scheme: SignatureScheme = DEFAULT_SCHEME) -> Tuple[KeyPair, List[RekeyNotice]]:
    """Replace the node's key pair; notices for every certifier, signed with the old key."""
    old = node.keys
    node.epoch += 1
    node.keys = generate_keypair(repr((node.key_seed, node.epoch)), scheme)
    node.revoked.append(old.public)
    # certificates this node issued were signed with the old key; re-sign them
    store = node.trust_store
    for subject, certs in list(store.certificates_held.items()):
        for cert in certs:
            if cert.issuer == node.id:
                store.hold(issue_certificate(node.keys, node.id, subject, cert.subject_key, now, scheme))
    notices = []
    for peer in sorted(node.certifiers):
        notice = RekeyNotice(node.id, node.keys.public, node.epoch, now)
        notices.append(replace(notice, signature=sign_message(old, notice.payload(), scheme)))
    return old, notices


# -- engine ---------------------------------------------------------------------------


class Adversary:
    """Hooks the engine consults; the default is an all-honest network."""

    def is_attacker(self, node: NodeId) -> bool:
        return False

    def reply(self, node: NodeState, creq: CertRequest, path: Sequence[NodeId], now: float) -> CertReply:
        raise NotImplementedError

    def on_route(self, node: NodeId, payload: object) -> Tuple[str, object]:
        return "pass", payload


@dataclass
class _CopyBuffer:
    expected: int
    copies: List[CertReply] = field(default_factory=list)
    done: bool = False


class CertificationProtocol:
    """Runs every node's state machine inside one ``SimWorld``."""

    def __init__(
        self,
        world: SimWorld,
        nodes: Dict[NodeId, NodeState],
        params: TrustParams,
        config: ProtocolConfig = ProtocolConfig(),
        adversary: Optional[Adversary] = None,
        scheme: SignatureScheme = DEFAULT_SCHEME,
    ) -> None:
        config.validate()
        self.world = world
        self.nodes = nodes
        self.params = params
        self.config = config
        self.adversary = adversary or Adversary()
        self.scheme = scheme
        self._buffers: Dict[Tuple[RequestId, NodeId], _CopyBuffer] = {}
        self.on_accept: List[Callable[[NodeState, ExchangeState], None]] = []
        self.replies_sent: Dict[RequestId, List[NodeId]] = {}
        world.relay_filter = self.adversary.on_route
        if config.rekey_period is not None:
            for nid in sorted(nodes):
                if not self.adversary.is_attacker(nid):
                    world.schedule(config.rekey_period, self._rekey_timer, nid)

    @property
    def copy_grace(self) -> float:
        if self.config.copy_grace is not None:
            return self.config.copy_grace
        return self.config.ttl_max * self.world.config.per_hop_latency

    def _emit(self, kind: str, node=None, peer=None, request=None, outcome=None, detail=None) -> None:
        self.world.trace.emit(self.world.now, kind, node, peer, request, outcome, detail)

    # exchanges ---------------------------------------------------------------

    def start_exchange(self, origin: NodeId, target: NodeId, mpktv: Optional[float] = None,
                       counted: bool = True) -> ExchangeState:
        node = self.nodes[origin]
        threshold = node.mpktv if mpktv is None else mpktv
        ex, creq = start_exchange(node, target, threshold, self.config.initial_ttl, self.world.now, counted)
        self._emit("exchange_start", origin, target, detail=f"mpktv={threshold:.3f}")
        if creq is None:
            self._emit("exchange_accept", origin, target, outcome="cache_hit", detail="delay=0.000000")
            return ex
        self._send_round(node, ex, creq)
        return ex

    def _send_round(self, node: NodeState, ex: ExchangeState, creq: CertRequest) -> None:
        self.world.flood(node.id, creq, creq.ttl, self._on_creq, request=creq.request_id)
        timer = 2 * creq.ttl * self.world.config.per_hop_latency
        self.world.schedule(timer, self._round_timer, node.id, ex, creq.request_id)

    def _round_timer(self, origin: NodeId, ex: ExchangeState, rid: RequestId) -> None:
        if not ex.pending or ex.request_ids[-1] != rid:
            return
        node = self.nodes[origin]
        creq = escalate_ttl(node, ex, self.config)
        if creq is None:
            if ex.status is Status.FAILED:
                self._emit("exchange_fail", origin, ex.target, rid, "ttl_exhausted")
            return
        self._emit("ttl_escalate", origin, ex.target, creq.request_id, detail=f"ttl={creq.ttl}")
        self._send_round(node, ex, creq)

    def _on_creq(self, nid: NodeId, creq: CertRequest, path: Tuple[NodeId, ...], ttl: int) -> bool:
        node = self.nodes[nid]
        arrived = creq if creq.ttl == ttl else replace(creq, ttl=ttl)
        if arrived.join:
            return self._on_join(node, arrived, path)
        if self.adversary.is_attacker(nid):
            if creq.request_id in node.seen_requests:
                return False
            node.seen_requests[creq.request_id] = True
            reply = self.adversary.reply(node, arrived, path, self.world.now)
            self._emit("crep_send", nid, creq.origin, creq.request_id, "spurious")
            self._record_reply(reply)
            self._send_reply(reply, multipath=creq.origin not in node.certifiers)
            return False
        has_route = self.world.cached_route(nid, creq.target) is not None
        d = handle_creq(node, arrived, path, self.world.now, self.config, has_route, self.scheme)
        if d.action is Action.REPLY:
            assert d.reply is not None
            self._emit("crep_send", nid, creq.origin, creq.request_id, d.reason,
                       "multipath" if d.multipath else "reverse")
            self._record_reply(d.reply)
            self._send_reply(d.reply, d.multipath)
            if d.notify_target:
                self._notify_target(node, arrived)
            return False
        if d.action is Action.DROP and d.reason == "malformed":
            self._emit("creq_drop", nid, creq.origin, creq.request_id, "malformed")
        return d.action is Action.FORWARD

    def _record_reply(self, reply: CertReply) -> None:
        self.replies_sent.setdefault(reply.request_id, []).append(reply.responder)

    def deliver_reply_multipath(self, reply: CertReply, origin: NodeId, path_count: int) -> int:
        """Send ``reply`` over up to ``path_count`` node-disjoint routes; returns copies sent."""
        paths = self.world.node_disjoint_paths(reply.responder, origin, path_count)
        if not paths:
            self._emit("crep_undeliverable", reply.responder, origin, reply.request_id, "no_path")
            return 0
        for p in paths:
            copy = replace(reply, path=p, copies=len(paths))
            self.world.unicast(p, copy, self._on_crep_copy, kind="crep", request=reply.request_id)
        return len(paths)

    def _send_reply(self, reply: CertReply, multipath: bool) -> None:
        if multipath:
            self.deliver_reply_multipath(reply, reply.origin, self.config.path_count)
        else:
            self.world.unicast(reply.path, reply, self._on_crep_copy, kind="crep", request=reply.request_id)

    def _on_crep_copy(self, reply: CertReply, route: Tuple[NodeId, ...]) -> None:
        key = (reply.request_id, reply.responder)
        buf = self._buffers.get(key)
        if buf is None:
            buf = self._buffers[key] = _CopyBuffer(expected=reply.copies)
            if reply.copies > 1:
                self.world.schedule(self.copy_grace, self._close_buffer, key)
        if buf.done:
            # a straggler after the verdict; still compare so tampering is visible
            if buf.copies and reply.canonical() != buf.copies[0].canonical():
                self._emit("crep_tamper_detected", route[-1], reply.responder, reply.request_id, "late_copy")
            return
        buf.copies.append(reply)
        if len(buf.copies) >= buf.expected:
            self._close_buffer(key)

    def _close_buffer(self, key) -> None:
        buf = self._buffers[key]
        if buf.done:
            return
        buf.done = True
        first = buf.copies[0]
        origin = first.origin
        if any(c.canonical() != first.canonical() for c in buf.copies[1:]):
            self._emit("crep_tamper_detected", origin, first.responder, first.request_id, "discarded",
                       f"copies={len(buf.copies)}")
            return
        self._process_reply(self.nodes[origin], first)

    def _process_reply(self, node: NodeState, reply: CertReply) -> None:
        ex, acc, outcome = handle_crep(node, reply, self.world.now, self.params, self.scheme)
        self._emit("crep_recv", node.id, reply.responder, reply.request_id, outcome)
        if acc is not None and ex is not None:
            self._emit("exchange_accept", node.id, ex.target, reply.request_id, "accepted",
                       f"delay={ex.delay:.6f} aggregate={acc.aggregate:.6f} key={acc.key.short()}")
            for hook in self.on_accept:
                hook(node, ex)
            self.finalize_mutual(node, ex, acc)

    # mutual certification ------------------------------------------------------

    def finalize_mutual(self, node: NodeState, ex: ExchangeState, acc: Acceptance) -> None:
        route = self.world.discover_route(node.id, ex.target)
        if route is None:
            self._emit("first_packet_drop", node.id, ex.target, outcome="no_route")
            return
        pkt = FirstPacket(node.id, ex.target, acc.key, node.keys.public, acc.winners,
                          tuple(sorted(node.certifiers)))
        pkt = replace(pkt, signature=sign_message(node.keys, pkt.payload(), self.scheme))
        self.world.unicast(route, pkt, self._on_first_packet, kind="first_packet")

    def _on_first_packet(self, pkt: FirstPacket, route) -> None:
        target = self.nodes[pkt.target]
        origin = self.nodes[pkt.origin]
        if self.adversary.is_attacker(target.id):
            return
        if not verify_message(pkt.origin_key, pkt.payload(), pkt.signature, self.scheme) \
                or pkt.origin_key != origin.keys.public:
            self._emit("mutual_reject", target.id, origin.id, outcome="bad_signature")
            return
        ok, why = mutual_certify(origin, target, pkt.accepted_key, pkt.origin_certifiers,
                                 self.world.now, self.params, self.scheme)
        self._emit("mutual_certified" if ok else "mutual_reject", target.id, origin.id, outcome=why)

    # notify-target ----------------------------------------------------------------

    def _notify_target(self, relay: NodeState, creq: CertRequest) -> None:
        route = self.world.cached_route(relay.id, creq.target)
        if route is None:
            return
        note = NotifyTarget(relay.id, creq.origin, creq.origin_key, creq.origin_certifiers, creq.request_id)
        note = replace(note, signature=sign_message(relay.keys, note.payload(), self.scheme))
        self._emit("notify_target", relay.id, creq.target, creq.request_id)
        self.world.unicast(route, note, lambda p, r, t=creq.target: self._on_notify(t, p), kind="notify")

    def _on_notify(self, target_id: NodeId, note: NotifyTarget) -> None:
        target = self.nodes[target_id]
        if self.adversary.is_attacker(target_id):
            return
        relay_key = target.peer_keys.get(note.relay)
        if relay_key is None or not verify_message(relay_key, note.payload(), note.signature, self.scheme):
            self._emit("notify_reject", target_id, note.relay, note.request_id, "unverifiable")
            return
        if note.origin in target.certifiers:
            return
        current = target.exchanges.get(note.origin)
        if current is not None and current.pending:
            return
        self._emit("notify_accept", target_id, note.origin, note.request_id, "reverse_exchange")
        self.start_exchange(target_id, note.origin, counted=False)

    # bootstrap -----------------------------------------------------------------------

    def bootstrap(self, nid: NodeId) -> None:
        """Join-time flood: every honest node that hears it certifies the joiner mutually."""
        node = self.nodes[nid]
        creq = CertRequest(node.new_request_id(), nid, nid, self.config.ttl_max, (), node.keys.public, join=True)
        node.seen_requests[creq.request_id] = True
        self._emit("bootstrap", nid, detail=f"ttl={creq.ttl}")
        self.world.flood(nid, creq, creq.ttl, self._on_creq, request=creq.request_id)

    def _on_join(self, node: NodeState, creq: CertRequest, path: Tuple[NodeId, ...]) -> bool:
        if creq.request_id in node.seen_requests:
            return False
        node.seen_requests[creq.request_id] = True
        forward = creq.ttl - 1 >= 1
        if self.adversary.is_attacker(node.id):
            return forward
        now = self.world.now
        offer = JoinOffer(
            node.id,
            creq.origin,
            issue_certificate(node.keys, node.id, node.id, node.keys.public, now, self.scheme),
            issue_certificate(node.keys, node.id, creq.origin, creq.origin_key, now, self.scheme),
        )
        self.world.unicast(tuple(reversed(path)), offer, self._on_join_offer, kind="join_offer",
                           request=creq.request_id)
        return forward

    def _on_join_offer(self, offer: JoinOffer, route) -> None:
        joiner = self.nodes[offer.joiner]
        responder = self.nodes[offer.responder]
        sc = offer.self_cert
        if not (sc.self_signed and sc.issuer == offer.responder and verify_certificate(sc, sc.subject_key, self.scheme)):
            self._emit("join_reject", joiner.id, offer.responder, outcome="unverifiable")
            return
        if not verify_certificate(offer.joiner_cert, sc.subject_key, self.scheme) \
                or offer.joiner_cert.subject_key != joiner.keys.public:
            self._emit("join_reject", joiner.id, offer.responder, outcome="bad_binding")
            return
        install_mutual(joiner, responder, self.world.now, self.params, self.scheme)
        self._emit("join_certified", joiner.id, offer.responder)

    # re-keying ---------------------------------------------------------------------

    def _rekey_timer(self, nid: NodeId) -> None:
        self.periodic_rekey(nid)
        assert self.config.rekey_period is not None
        self.world.schedule(self.config.rekey_period, self._rekey_timer, nid)

    def periodic_rekey(self, nid: NodeId) -> KeyPair:
        node = self.nodes[nid]
        old, notices = rekey(node, self.world.now, self.scheme)
        self._emit("rekey", nid, detail=f"epoch={node.epoch} peers={len(notices)}")
        for peer, notice in zip(sorted(node.certifiers), notices):
            route = self.world.discover_route(nid, peer)
            if route is None:
                self._emit("rekey_unreachable", nid, peer)
                continue
            self.world.unicast(route, notice, lambda n, r, p=peer: self._on_rekey(p, n), kind="rekey")
        return node.keys

    def _on_rekey(self, peer_id: NodeId, notice: RekeyNotice) -> None:
        ok = accept_rekey(self.nodes[peer_id], notice, self.world.now, self.scheme)
        self._emit("rekey_accept" if ok else "rekey_reject", peer_id, notice.node, detail=f"epoch={notice.epoch}")

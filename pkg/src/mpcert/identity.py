"""Node identities, key pairs and certificates.

Signatures use a simulation-grade scheme: a keyed digest (HMAC-SHA256) over
the canonical serialization of the signed fields, keyed by the issuer's
secret.  Public keys are an invertible blinding of the secret under a
scheme-wide pad, so verification needs only the public key while nodes in
the simulator only ever see the ``sign``/``verify`` surface.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace
from typing import Protocol, Union

NodeId = int

KEY_BYTES = 32

Seed = Union[int, bytes, str]


@dataclass(frozen=True, order=True)
class PublicKey:
    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != KEY_BYTES:
            raise ValueError(f"public key must be {KEY_BYTES} bytes, got {len(self.data)}")

    def short(self) -> str:
        return self.data[:4].hex()

    def __repr__(self) -> str:
        return f"PublicKey({self.short()}..)"


@dataclass(frozen=True)
class SecretKey:
    data: bytes = field(repr=False)


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey


class SignatureScheme(Protocol):
    """Anything that can derive, sign and verify.  Swap in real crypto here."""

    def derive_public(self, secret: SecretKey) -> PublicKey: ...

    def sign(self, secret: SecretKey, message: bytes) -> bytes: ...

    def verify(self, public: PublicKey, message: bytes, signature: bytes) -> bool: ...


class DigestScheme:
    """Keyed-digest signatures; deterministic and immutable once built."""

    def __init__(self, domain: bytes = b"mpcert/digest-scheme/v1") -> None:
        self._pad = hashlib.sha256(domain).digest()

    def _unblind(self, public: PublicKey) -> bytes:
        return bytes(a ^ b for a, b in zip(public.data, self._pad))

    def derive_public(self, secret: SecretKey) -> PublicKey:
        return PublicKey(bytes(a ^ b for a, b in zip(secret.data, self._pad)))

    def sign(self, secret: SecretKey, message: bytes) -> bytes:
        return hmac.new(secret.data, message, hashlib.sha256).digest()

    def verify(self, public: PublicKey, message: bytes, signature: bytes) -> bool:
        expected = hmac.new(self._unblind(public), message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


DEFAULT_SCHEME = DigestScheme()


def _seed_bytes(seed: Seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        # arbitrary-size ints, sign included, map injectively
        n = seed.bit_length() // 8 + 1
        return b"i" + seed.to_bytes(n, "big", signed=True)
    return b"s" + seed.encode("utf-8")


def generate_keypair(seed: Seed, scheme: SignatureScheme = DEFAULT_SCHEME) -> KeyPair:
    """Derive a key pair deterministically from ``seed``."""
    secret = SecretKey(hashlib.sha256(b"mpcert/secret/" + _seed_bytes(seed)).digest())
    return KeyPair(public=scheme.derive_public(secret), secret=secret)


def time_to_micros(t: float) -> int:
    return int(round(t * 1_000_000))


@dataclass(frozen=True)
class Certificate:
    issuer: NodeId
    subject: NodeId
    subject_key: PublicKey
    issued_at: float
    signature: bytes

    @property
    def self_signed(self) -> bool:
        return self.issuer == self.subject

    def signed_bytes(self) -> bytes:
        return certificate_payload(self.issuer, self.subject, self.subject_key, self.issued_at)

    def canonical(self) -> bytes:
        """Full byte image, used to compare copies of the same certificate."""
        return self.signed_bytes() + self.signature


def certificate_payload(issuer: NodeId, subject: NodeId, subject_key: PublicKey, issued_at: float) -> bytes:
    # issuer, subject: u32 BE; key: 32 bytes; issued_at: u64 BE microseconds
    return (
        b"CERT"
        + struct.pack(">II", issuer, subject)
        + subject_key.data
        + struct.pack(">Q", time_to_micros(issued_at))
    )


def issue_certificate(
    issuer_keys: KeyPair,
    issuer: NodeId,
    subject: NodeId,
    subject_key: PublicKey,
    now: float,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> Certificate:
    payload = certificate_payload(issuer, subject, subject_key, now)
    return Certificate(
        issuer=issuer,
        subject=subject,
        subject_key=subject_key,
        issued_at=now,
        signature=scheme.sign(issuer_keys.secret, payload),
    )


def verify_certificate(
    cert: Certificate, issuer_key: PublicKey, scheme: SignatureScheme = DEFAULT_SCHEME
) -> bool:
    return scheme.verify(issuer_key, cert.signed_bytes(), cert.signature)


def sign_message(keys: KeyPair, message: bytes, scheme: SignatureScheme = DEFAULT_SCHEME) -> bytes:
    return scheme.sign(keys.secret, message)


def verify_message(
    public: PublicKey, message: bytes, signature: bytes, scheme: SignatureScheme = DEFAULT_SCHEME
) -> bool:
    return scheme.verify(public, message, signature)


def flip_key(key: PublicKey) -> PublicKey:
    """Bitwise complement of a key; what an on-path tamperer writes."""
    return PublicKey(bytes(b ^ 0xFF for b in key.data))


def tampered(cert: Certificate) -> Certificate:
    return replace(cert, subject_key=flip_key(cert.subject_key))

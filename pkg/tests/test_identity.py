import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcert.identity import (
    KEY_BYTES,
    Certificate,
    DigestScheme,
    PublicKey,
    flip_key,
    generate_keypair,
    issue_certificate,
    sign_message,
    tampered,
    verify_certificate,
    verify_message,
)


def test_same_seed_same_keypair():
    assert generate_keypair(42) == generate_keypair(42)


def test_different_seeds_distinct_keys():
    assert generate_keypair(1).public != generate_keypair(2).public


def test_thousand_seeds_all_distinct():
    keys = {generate_keypair(s).public for s in range(1000)}
    assert len(keys) == 1000


def test_seed_kinds_do_not_collide():
    # int 1, the string "1" and raw bytes must not alias each other
    ks = {generate_keypair(1).public, generate_keypair("1").public, generate_keypair(b"\x01").public,
          generate_keypair(-1).public}
    assert len(ks) == 4


def test_public_key_is_fixed_length():
    assert len(generate_keypair(7).public.data) == KEY_BYTES
    with pytest.raises(ValueError):
        PublicKey(b"short")


def test_secret_not_in_repr():
    kp = generate_keypair(3)
    assert kp.secret.data.hex() not in repr(kp)


def test_public_derivable_from_secret():
    kp = generate_keypair(9)
    assert DigestScheme().derive_public(kp.secret) == kp.public


def test_issue_and_verify_round_trip():
    issuer, subject = generate_keypair(1), generate_keypair(2)
    cert = issue_certificate(issuer, 1, 2, subject.public, 3.5)
    assert verify_certificate(cert, issuer.public)
    assert not cert.self_signed


def test_verify_rejects_wrong_issuer_key():
    issuer, other = generate_keypair(1), generate_keypair(3)
    cert = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    assert not verify_certificate(cert, other.public)


def test_self_signed_flag():
    kp = generate_keypair(5)
    cert = issue_certificate(kp, 5, 5, kp.public, 0.0)
    assert cert.self_signed
    assert verify_certificate(cert, kp.public)


@pytest.mark.parametrize("field,value", [
    ("issuer", 99),
    ("subject", 98),
    ("issued_at", 1.25),
])
def test_any_field_change_breaks_signature(field, value):
    issuer = generate_keypair(1)
    cert = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    assert not verify_certificate(dataclasses.replace(cert, **{field: value}), issuer.public)


def test_tampered_key_breaks_signature():
    issuer = generate_keypair(1)
    cert = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    bad = tampered(cert)
    assert bad.subject_key == flip_key(cert.subject_key) != cert.subject_key
    assert not verify_certificate(bad, issuer.public)


def test_signature_bit_flip_detected():
    issuer = generate_keypair(1)
    cert = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    sig = bytearray(cert.signature)
    sig[0] ^= 1
    assert not verify_certificate(dataclasses.replace(cert, signature=bytes(sig)), issuer.public)


def test_canonical_includes_signature():
    issuer = generate_keypair(1)
    a = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    b = issue_certificate(issuer, 1, 2, generate_keypair(2).public, 0.0)
    assert a.canonical() == b.canonical()
    assert a.canonical().endswith(a.signature)


def test_message_signatures():
    kp = generate_keypair(11)
    sig = sign_message(kp, b"hello")
    assert verify_message(kp.public, b"hello", sig)
    assert not verify_message(kp.public, b"hellO", sig)
    assert not verify_message(generate_keypair(12).public, b"hello", sig)


def test_scheme_domains_are_separate():
    kp = generate_keypair(4)
    other = DigestScheme(b"another-domain")
    assert other.derive_public(kp.secret) != kp.public
    # the other domain unblinds kp.public to the wrong secret, so our signatures fail there
    assert not other.verify(kp.public, b"m", sign_message(kp, b"m"))


@given(seed=st.integers(min_value=0, max_value=2**40), subject=st.integers(0, 2**31),
       t=st.floats(min_value=0, max_value=1e6, allow_nan=False))
def test_round_trip_property(seed, subject, t):
    kp = generate_keypair(seed)
    cert = issue_certificate(kp, 0, subject, generate_keypair(seed + 1).public, t)
    assert isinstance(cert, Certificate)
    assert verify_certificate(cert, kp.public)
    assert not verify_certificate(tampered(cert), kp.public)

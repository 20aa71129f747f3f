import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arksim import crypto
from arksim.crypto import (
    CryptoError,
    Fixed,
    HashCollision,
    NotReused,
    SessionAborted,
    aggregate,
    aggregate_secret,
    cosign,
    extract_secret,
    keygen,
    sign,
    verify,
)


def test_keygen_deterministic():
    assert keygen(b"seed") == keygen(b"seed")
    assert keygen(b"seed") != keygen(b"other")


def test_sign_verify_roundtrip():
    sk, pk = keygen(b"a")
    sig = sign(sk, b"message")
    assert verify(pk, b"message", sig)


def test_verify_rejects_wrong_message():
    sk, pk = keygen(b"a")
    sig = sign(sk, b"message")
    assert not verify(pk, b"other", sig)


def test_verify_rejects_wrong_key():
    sk, _ = keygen(b"a")
    _, pk2 = keygen(b"b")
    assert not verify(pk2, b"m", sign(sk, b"m"))


def test_verify_rejects_tampered_s():
    sk, pk = keygen(b"a")
    sig = sign(sk, b"m")
    bad = crypto.Signature(sig.R, (sig.s + 1) % crypto.Q)
    assert not verify(pk, b"m", bad)


def test_aggregate_order_independent():
    _, pk1 = keygen(b"a")
    _, pk2 = keygen(b"b")
    assert aggregate([pk1, pk2]) == aggregate([pk2, pk1])


def test_aggregate_rejects_duplicates_and_empty():
    _, pk = keygen(b"a")
    with pytest.raises(CryptoError):
        aggregate([pk, pk])
    with pytest.raises(CryptoError):
        aggregate([])


def test_cosign_verifies_under_aggregate():
    sks = [keygen(b"%d" % i)[0] for i in range(3)]
    agg = aggregate([sk.public() for sk in sks])
    sig = cosign(b"digest", sks, agg)
    assert verify(agg.point, b"digest", sig)


def test_cosign_aborts_on_missing_signer():
    sk1, pk1 = keygen(b"a")
    sk2, pk2 = keygen(b"b")
    agg = aggregate([pk1, pk2])
    with pytest.raises(SessionAborted):
        cosign(b"digest", [sk1], agg)


def test_cosign_aborts_on_extra_signer():
    sk1, pk1 = keygen(b"a")
    sk2, _ = keygen(b"b")
    agg = aggregate([pk1])
    with pytest.raises(SessionAborted):
        cosign(b"d", [sk1, sk2], agg)


def test_singleton_aggregate_signable_alone():
    sk, pk = keygen(b"solo")
    agg = aggregate([pk])
    sig = cosign(b"d", [sk], agg)
    assert verify(agg.point, b"d", sig)


def test_aggregate_secret_matches_aggregate_point():
    sks = [keygen(b"s%d" % i)[0] for i in range(4)]
    agg = aggregate([sk.public() for sk in sks])
    combined = aggregate_secret(sks)
    assert combined.public() == agg.point


def test_extract_secret_recovers_key():
    sk, pk = keygen(b"victim")
    nonce = Fixed(987654321)
    s1 = sign(sk, b"m1", nonce)
    s2 = sign(sk, b"m2", nonce)
    assert extract_secret(pk, b"m1", s1, b"m2", s2).scalar == sk.scalar


def test_extract_requires_shared_nonce():
    sk, pk = keygen(b"victim")
    s1 = sign(sk, b"m1", Fixed(1))
    s2 = sign(sk, b"m2", Fixed(2))
    with pytest.raises(NotReused):
        extract_secret(pk, b"m1", s1, b"m2", s2)


def test_extract_requires_distinct_messages():
    sk, pk = keygen(b"victim")
    nonce = Fixed(7)
    s1 = sign(sk, b"m", nonce)
    with pytest.raises((CryptoError, HashCollision)):
        extract_secret(pk, b"m", s1, b"m", s1)


def test_extract_randomized_100():
    for i in range(100):
        sk, pk = keygen(b"rand-%d" % i)
        nonce = Fixed(1 + i * 31337)
        s1 = sign(sk, b"first-%d" % i, nonce)
        s2 = sign(sk, b"second-%d" % i, nonce)
        assert extract_secret(pk, b"first-%d" % i, s1,
                              b"second-%d" % i, s2).scalar == sk.scalar


@settings(max_examples=30, deadline=None)
@given(st.binary(min_size=1, max_size=16), st.binary(min_size=1, max_size=64))
def test_property_sign_verify(seed, msg):
    sk, pk = keygen(seed)
    assert verify(pk, msg, sign(sk, msg))


@settings(max_examples=20, deadline=None)
@given(st.binary(min_size=1, max_size=8),
       st.integers(min_value=1, max_value=crypto.Q - 1))
def test_property_nonce_reuse_extracts(seed, r):
    sk, pk = keygen(seed)
    s1 = sign(sk, b"one", Fixed(r))
    s2 = sign(sk, b"two", Fixed(r))
    assert extract_secret(pk, b"one", s1, b"two", s2).scalar == sk.scalar

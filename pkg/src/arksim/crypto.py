"""Schnorr signatures over secp256k1, n-of-n key aggregation, and
private-key extraction from nonce reuse.

The scheme signs s = r + H(R || pk || m) * sk (mod q) and verifies by
checking R = s*G - H(R || pk || m)*pk.  Aggregation is a deterministic
coefficient-hashed n-of-n combine over a canonically ordered member set;
the interactive signing session is modeled as a single synchronous call
that either yields a full signature or aborts without output.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

# secp256k1 parameters
P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
Q = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G = (
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)

Point = Optional[Tuple[int, int]]  # None is the point at infinity


class CryptoError(Exception):
    pass


class SessionAborted(CryptoError):
    """A cosigning session failed; no partial signature is released."""


class NotReused(CryptoError):
    """The two signatures do not share a nonce commitment."""


class HashCollision(CryptoError):
    """The two challenge hashes coincide mod q; extraction impossible."""


def _inv(a: int, m: int = P) -> int:
    return pow(a, -1, m)


def point_add(a: Point, b: Point) -> Point:
    if a is None:
        return b
    if b is None:
        return a
    if a[0] == b[0] and (a[1] + b[1]) % P == 0:
        return None
    if a == b:
        lam = 3 * a[0] * a[0] * _inv(2 * a[1]) % P
    else:
        lam = (b[1] - a[1]) * _inv(b[0] - a[0]) % P
    x = (lam * lam - a[0] - b[0]) % P
    return (x, (lam * (a[0] - x) - a[1]) % P)


def point_mul(p: Point, n: int) -> Point:
    # Jacobian ladder: one field inversion total instead of one per addition.
    n %= Q
    if n == 0 or p is None:
        return None
    jx, jy, jz = p[0], p[1], 1
    rx, ry, rz = 0, 0, 0  # infinity marker: rz == 0

    def jdbl(x, y, z):
        if z == 0 or y == 0:
            return (0, 0, 0)
        s = 4 * x * y * y % P
        m = 3 * x * x % P  # curve a == 0
        nx = (m * m - 2 * s) % P
        ny = (m * (s - nx) - 8 * y * y * y * y) % P
        nz = 2 * y * z % P
        return (nx, ny, nz)

    def jadd(x1, y1, z1, x2, y2, z2):
        if z1 == 0:
            return (x2, y2, z2)
        if z2 == 0:
            return (x1, y1, z1)
        z1s, z2s = z1 * z1 % P, z2 * z2 % P
        u1, u2 = x1 * z2s % P, x2 * z1s % P
        s1, s2 = y1 * z2s * z2 % P, y2 * z1s * z1 % P
        if u1 == u2:
            if s1 != s2:
                return (0, 0, 0)
            return jdbl(x1, y1, z1)
        h = (u2 - u1) % P
        r = (s2 - s1) % P
        h2 = h * h % P
        h3 = h2 * h % P
        nx = (r * r - h3 - 2 * u1 * h2) % P
        ny = (r * (u1 * h2 - nx) - s1 * h3) % P
        nz = h * z1 * z2 % P
        return (nx, ny, nz)

    while n:
        if n & 1:
            rx, ry, rz = jadd(rx, ry, rz, jx, jy, jz)
        jx, jy, jz = jdbl(jx, jy, jz)
        n >>= 1
    if rz == 0:
        return None
    zi = _inv(rz)
    zi2 = zi * zi % P
    return (rx * zi2 % P, ry * zi2 * zi % P)


def compress(p: Point) -> bytes:
    if p is None:
        raise CryptoError("cannot encode the point at infinity")
    return bytes([2 + (p[1] & 1)]) + p[0].to_bytes(32, "big")


def _tagged(tag: str, *chunks: bytes) -> int:
    h = hashlib.sha256(tag.encode())
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class SecretKey:
    scalar: int

    def __post_init__(self):
        if not 1 <= self.scalar < Q:
            raise CryptoError("secret scalar out of range")

    def public(self) -> "PublicKey":
        return PublicKey(point_mul(G, self.scalar))

    def hex(self) -> str:
        return self.scalar.to_bytes(32, "big").hex()


@dataclass(frozen=True)
class PublicKey:
    point: Tuple[int, int]

    def encode(self) -> bytes:
        return compress(self.point)

    def hex(self) -> str:
        return self.encode().hex()


@dataclass(frozen=True)
class Signature:
    R: Tuple[int, int]
    s: int

    def hex(self) -> str:
        return (compress(self.R) + self.s.to_bytes(32, "big")).hex()


@dataclass(frozen=True)
class AggregateKey:
    point: PublicKey
    members: Tuple[PublicKey, ...]  # canonically ordered


@dataclass(frozen=True)
class Fresh:
    pass


@dataclass(frozen=True)
class Fixed:
    r: int

    def __post_init__(self):
        if self.r % Q == 0:
            raise CryptoError("fixed nonce must be nonzero")


def challenge(R: Point, pk: PublicKey, m: bytes) -> int:
    # H(R || pk || m), reduced mod q
    return _tagged("arksim/challenge", compress(R), pk.encode(), m) % Q


def keygen(seed: bytes) -> Tuple[SecretKey, PublicKey]:
    """Deterministically derive a keypair from 256-bit entropy."""
    counter = 0
    while True:
        sk = _tagged("arksim/keygen", seed, counter.to_bytes(4, "big")) % Q
        if sk != 0:
            break
        counter += 1
    secret = SecretKey(sk)
    return secret, secret.public()


def sign(sk: SecretKey, m: bytes, nonce: Fresh | Fixed = Fresh()) -> Signature:
    if not m:
        raise CryptoError("empty message")
    if isinstance(nonce, Fixed):
        r = nonce.r % Q
    else:
        # deterministic nonce, unique per (key, message)
        r = _tagged("arksim/nonce", sk.scalar.to_bytes(32, "big"), m) % Q
        if r == 0:
            r = 1
    R = point_mul(G, r)
    pk = sk.public()
    s = (r + challenge(R, pk, m) * sk.scalar) % Q
    return Signature(R, s)


def verify(pk: PublicKey, m: bytes, sig: Signature) -> bool:
    try:
        lhs = point_add(point_mul(G, sig.s), point_mul(pk.point, Q - challenge(sig.R, pk, m)))
    except CryptoError:
        return False
    return lhs is not None and lhs == sig.R


def _sorted_members(pks: Iterable[PublicKey]) -> Tuple[PublicKey, ...]:
    return tuple(sorted(pks, key=lambda p: p.encode()))


def _coefficients(members: Sequence[PublicKey]) -> list[int]:
    setdigest = b"".join(p.encode() for p in members)
    return [_tagged("arksim/aggcoef", setdigest, p.encode()) % Q for p in members]


_aggregate_cache: Dict[Tuple[bytes, ...], AggregateKey] = {}


def aggregate(pks: Iterable[PublicKey]) -> AggregateKey:
    members = _sorted_members(pks)
    if not members:
        raise CryptoError("empty member set")
    if len(set(members)) != len(members):
        raise CryptoError("duplicate member")
    cache_key = tuple(m.encode() for m in members)
    cached = _aggregate_cache.get(cache_key)
    if cached is not None:
        return cached
    acc: Point = None
    for pk, coef in zip(members, _coefficients(members)):
        acc = point_add(acc, point_mul(pk.point, coef))
    if acc is None:
        raise CryptoError("degenerate aggregate key")
    result = AggregateKey(PublicKey(acc), members)
    _aggregate_cache[cache_key] = result
    return result


def aggregate_secret(signers: Sequence[SecretKey]) -> SecretKey:
    members = _sorted_members(sk.public() for sk in signers)
    by_pk = {sk.public(): sk for sk in signers}
    total = 0
    for pk, coef in zip(members, _coefficients(members)):
        total = (total + coef * by_pk[pk].scalar) % Q
    return SecretKey(total)


def cosign(
    tx_digest: bytes,
    signers: Sequence[SecretKey],
    expected: AggregateKey | None = None,
    nonce: Fresh | Fixed = Fresh(),
) -> Signature:
    """One simulated n-of-n signing session.

    `expected` pins the member set of the lock being satisfied; any
    mismatch (an absent or refusing signer) aborts with no output.
    """
    if not signers:
        raise SessionAborted("no signers present")
    present = _sorted_members(sk.public() for sk in signers)
    if len(set(present)) != len(present):
        raise SessionAborted("duplicate signer")
    if expected is not None and present != expected.members:
        raise SessionAborted("signer set does not match the aggregate key")
    return sign(aggregate_secret(signers), tx_digest, nonce)


def extract_secret(
    pk: PublicKey, m1: bytes, sig1: Signature, m2: bytes, sig2: Signature
) -> SecretKey:
    """Recover the private key from two signatures sharing a nonce:
    sk = (s1 - s2) / (H(R||pk||m1) - H(R||pk||m2)) mod q."""
    if m1 == m2:
        raise CryptoError("messages must differ")
    if sig1.R != sig2.R:
        raise NotReused("nonce commitments differ")
    if not (verify(pk, m1, sig1) and verify(pk, m2, sig2)):
        raise CryptoError("signatures do not verify under pk")
    denom = (challenge(sig1.R, pk, m1) - challenge(sig2.R, pk, m2)) % Q
    if denom == 0:
        raise HashCollision("challenge hashes coincide mod q")
    sk = (sig1.s - sig2.s) * pow(denom, -1, Q) % Q
    return SecretKey(sk)

"""Cryptographic building blocks: prime-field Shamir sharing, Diffie-Hellman
key agreement, AES-GCM authenticated encryption, and a counter-mode PRG that
expands a seed into a vector of residues mod ``2**R``.

None of this is hardened against side channels; it exists to drive the
protocol simulator faithfully and reproducibly.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from operator import mul
from typing import Iterable, Sequence, Union

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import wire
from .errors import (
    AuthenticationFailure,
    DuplicateIndex,
    FieldTooSmall,
    InsufficientShares,
    InvalidGroupElement,
    InvalidThreshold,
    MixedOwner,
    ShareMismatch,
)

SEED_BYTES = 16
NONCE_BYTES = 12
TAG_BYTES = 16

SEED_SHARE = "b"
KEY_SHARE = "sk"
_KIND_CODES = {SEED_SHARE: 0, KEY_SHARE: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


# ---------------------------------------------------------------------------
# Prime field
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _is_prime(p: int) -> bool:
    from sympy import isprime

    return bool(isprime(p))


@dataclass(frozen=True)
class PrimeField:
    """Integers modulo a prime ``p``; field elements are plain ``int`` in ``[0, p)``."""

    p: int

    def __post_init__(self):
        if self.p < 3 or not _is_prime(self.p):
            raise ValueError(f"field modulus {self.p} is not an odd prime")

    @cached_property
    def width(self) -> int:
        """Bytes needed to write any element."""
        return (self.p.bit_length() + 7) // 8

    @cached_property
    def chunk_bytes(self) -> int:
        """Largest byte count whose every value is below ``p``."""
        return (self.p.bit_length() - 1) // 8

    def inv(self, a: int) -> int:
        return pow(a, -1, self.p)


# A 31-bit Mersenne prime keeps every product below 2**62, so dealing and
# interpolation run as uint64 numpy arithmetic; byte secrets go in 3-byte chunks.
DEFAULT_FIELD = PrimeField((1 << 31) - 1)

_NUMPY_LIMIT = 1 << 32


# ---------------------------------------------------------------------------
# Shamir secret sharing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecretShare:
    index: int
    value: int
    owner: int = 0
    kind: str = SEED_SHARE
    threshold: int | None = None


def _check_points(points: Sequence[int], p: int) -> None:
    seen = set()
    for x in points:
        if x % p == 0:
            raise ValueError("evaluation point must be nonzero in the field")
        if x % p in seen:
            raise DuplicateIndex(f"duplicate evaluation point {x}")
        seen.add(x % p)


def _random_element(rng: random.Random, p: int) -> int:
    """Uniform draw from ``[0, p)`` by rejection on ``bit_length(p)`` random bits."""
    bits = p.bit_length()
    while True:
        x = rng.getrandbits(bits)
        if x < p:
            return x


def _deal(secrets: Sequence[int], t: int, points: Sequence[int], rng: random.Random, p: int):
    """One random degree ``t-1`` polynomial per secret, evaluated at ``points``.

    Returns ``rows[k][c]``: the value at ``points[k]`` for secret ``c``.
    Deliberately does not require ``len(points) >= t``.
    """
    polys = [[s] + [_random_element(rng, p) for _ in range(t - 1)] for s in secrets]
    if p < _NUMPY_LIMIT:
        x = np.array([v % p for v in points], dtype=np.uint64)
        vander = np.ones((len(points), t), dtype=np.uint64)
        for k in range(1, t):
            vander[:, k] = vander[:, k - 1] * x % p
        return _matmul_mod(vander, np.array(polys, dtype=np.uint64).T, p).tolist()
    rows = []
    for x in points:
        powers = [1] * t
        for k in range(1, t):
            powers[k] = powers[k - 1] * x % p
        rows.append([sum(map(mul, poly, powers)) % p for poly in polys])
    return rows


# -- uint64 helpers for fields below 2**32 -----------------------------------


def _matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """Exact ``a @ b mod p`` for uint64 matrices with entries below ``2**32``.

    Operands are split into 16-bit limbs so every float64 partial sum is an
    exact integer (inner dimension up to ``2**20``).
    """
    if a.shape[1] >= 1 << 20:
        raise ValueError("inner dimension too large for exact float accumulation")
    a_lo, a_hi = (a & 0xFFFF).astype(np.float64), (a >> 16).astype(np.float64)
    b_lo, b_hi = (b & 0xFFFF).astype(np.float64), (b >> 16).astype(np.float64)
    lo = (a_lo @ b_lo).astype(np.uint64) % p
    mid = (a_lo @ b_hi + a_hi @ b_lo).astype(np.uint64) % p
    hi = (a_hi @ b_hi).astype(np.uint64) % p
    return (hi * ((1 << 32) % p) % p + mid * (1 << 16) % p + lo) % p


def _prod_mod(a: np.ndarray, p: int) -> np.ndarray:
    """Product mod ``p`` along the last axis, by pairwise halving."""
    while a.shape[-1] > 1:
        if a.shape[-1] % 2:
            a = np.concatenate([a, np.ones(a.shape[:-1] + (1,), dtype=np.uint64)], axis=-1)
        a = a[..., 0::2] * a[..., 1::2] % p
    return a[..., 0]


def _inv_mod(a: np.ndarray, p: int) -> np.ndarray:
    return np.array([pow(int(v), -1, p) for v in a], dtype=np.uint64)


def _pairwise_diff(xs: np.ndarray, ys: np.ndarray, p: int) -> np.ndarray:
    """``(xs[i] - ys[j]) mod p`` as a uint64 matrix."""
    return ((xs.astype(np.int64)[:, None] - ys.astype(np.int64)[None, :]) % p).astype(np.uint64)


@lru_cache(maxsize=256)
def _np_weights(xs: tuple[int, ...], p: int) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange weights at zero and barycentric weights for nodes ``xs``."""
    x = np.array([v % p for v in xs], dtype=np.uint64)
    d = _pairwise_diff(x, x, p)  # d[j, m] = x_j - x_m
    np.fill_diagonal(d, 1)
    bary = _inv_mod(_prod_mod(d, p), p)
    # L_j(0) = bary_j * prod_{m != j} (0 - x_m)
    sign = 1 if len(xs) % 2 else p - 1
    total = int(_prod_mod(x, p)) * sign % p
    lam = bary * (total * _inv_mod(x, p) % p) % p
    for arr in (lam, bary):
        arr.setflags(write=False)
    return lam, bary


@lru_cache(maxsize=256)
def _np_basis(xs: tuple[int, ...], at: tuple[int, ...], p: int) -> np.ndarray:
    """``L_j(at[i])`` for the Lagrange basis on ``xs``; ``at`` must avoid the nodes."""
    _, bary = _np_weights(xs, p)
    e = _pairwise_diff(np.array(at, dtype=np.uint64), np.array(xs, dtype=np.uint64), p)
    k = len(xs)
    prefix = np.ones_like(e)
    suffix = np.ones_like(e)
    for j in range(1, k):
        prefix[:, j] = prefix[:, j - 1] * e[:, j - 1] % p
        suffix[:, k - 1 - j] = suffix[:, k - j] * e[:, k - j] % p
    out = prefix * suffix % p * bary % p
    out.setflags(write=False)
    return out


def shamir_share(
    secret: int,
    t: int,
    n_shares: int,
    rng: random.Random,
    field: PrimeField = DEFAULT_FIELD,
    *,
    points: Sequence[int] | None = None,
    owner: int = 0,
    kind: str = SEED_SHARE,
) -> list[SecretShare]:
    """Split ``secret`` into ``n_shares`` shares, any ``t`` of which reconstruct it.

    Shares are evaluations of a random degree ``t-1`` polynomial with constant
    term ``secret``, at ``points`` (default ``1..n_shares``).
    """
    if t < 1 or t > n_shares:
        raise InvalidThreshold(f"need 1 <= t <= n_shares, got t={t}, n_shares={n_shares}")
    if n_shares >= field.p:
        raise FieldTooSmall(f"{n_shares} shares do not fit in GF({field.p})")
    if not 0 <= secret < field.p:
        raise ValueError("secret is not a field element")
    points = list(points) if points is not None else list(range(1, n_shares + 1))
    if len(points) != n_shares:
        raise ValueError("number of evaluation points differs from n_shares")
    _check_points(points, field.p)
    rows = _deal([secret], t, points, rng, field.p)
    return [
        SecretShare(index=x, value=row[0], owner=owner, kind=kind, threshold=t)
        for x, row in zip(points, rows)
    ]


def _lagrange_at_zero(xs: Sequence[int], p: int) -> list[int]:
    coeffs = []
    for j, xj in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m != j:
                num = num * xm % p
                den = den * (xm - xj) % p
        coeffs.append(num * pow(den, -1, p) % p)
    return coeffs


def _barycentric_weights(xs: Sequence[int], p: int) -> list[int]:
    weights = []
    for j, xj in enumerate(xs):
        den = 1
        for m, xm in enumerate(xs):
            if m != j:
                den = den * (xj - xm) % p
        weights.append(pow(den, -1, p))
    return weights


def _basis_at(xs, weights, x: int, p: int) -> list[int]:
    """Lagrange basis values ``L_j(x)`` via prefix/suffix products, no inversions."""
    k = len(xs)
    prefix = [1] * (k + 1)
    for i in range(k):
        prefix[i + 1] = prefix[i] * (x - xs[i]) % p
    out = [0] * k
    suffix = 1
    for j in range(k - 1, -1, -1):
        out[j] = weights[j] * prefix[j] % p * suffix % p
        suffix = suffix * (x - xs[j]) % p
    return out


def _validate_group(shares: Sequence, what: str) -> int | None:
    if not shares:
        raise InsufficientShares(f"no {what} supplied")
    owner, kind = shares[0].owner, shares[0].kind
    for s in shares:
        if s.owner != owner or s.kind != kind:
            raise MixedOwner("shares belong to different secrets")
    seen = set()
    for s in shares:
        if s.index in seen:
            raise DuplicateIndex(f"duplicate evaluation point {s.index}")
        seen.add(s.index)
    t = shares[0].threshold
    if t is not None and len(shares) < t:
        raise InsufficientShares(f"{len(shares)} shares supplied, threshold is {t}")
    return t


def _interpolate_rows(xs, rows, t, p, verify: bool) -> list[int]:
    """Recover constant terms from ``rows[k][c]``; check surplus rows when asked."""
    k = t if t is not None else len(xs)
    base_x = tuple(xs[:k])
    if p < _NUMPY_LIMIT:
        y = np.array(rows, dtype=np.uint64)
        base = y[:k] % p
        lam, _ = _np_weights(base_x, p)
        secrets = _matmul_mod(lam[None, :], base, p)[0]
        if verify and len(xs) > k:
            pred = _matmul_mod(_np_basis(base_x, tuple(xs[k:]), p), base, p)
            bad = np.flatnonzero((pred != y[k:]).any(axis=1))
            if bad.size:
                raise ShareMismatch(f"share at point {xs[k + bad[0]]} is inconsistent")
        return secrets.tolist()
    lam = _lagrange_at_zero(base_x, p)
    cols = list(zip(*rows))
    secrets = [sum(map(mul, lam, col[:k])) % p for col in cols]
    if verify and len(xs) > k:
        w = _barycentric_weights(base_x, p)
        for i in range(k, len(xs)):
            basis = _basis_at(base_x, w, xs[i], p)
            if any(sum(map(mul, basis, col[:k])) % p != rows[i][c] for c, col in enumerate(cols)):
                raise ShareMismatch(f"share at point {xs[i]} is inconsistent")
    return secrets


def shamir_reconstruct(
    shares: Sequence[SecretShare], field: PrimeField = DEFAULT_FIELD, *, verify: bool = True
) -> int:
    """Lagrange interpolation at zero.

    With the sharing threshold known, the first ``t`` shares fix the
    polynomial and, if ``verify``, every surplus share is checked against it.
    """
    t = _validate_group(shares, "shares")
    xs = [s.index for s in shares]
    rows = [[s.value] for s in shares]
    return _interpolate_rows(xs, rows, t, field.p, verify)[0]


# -- byte-string secrets, shared chunkwise ----------------------------------


_SHARE_HEAD = struct.Struct(">IBIHHH")


@dataclass(frozen=True)
class ByteShare:
    """One holder's share of a byte-string secret: one field element per chunk."""

    index: int
    owner: int
    kind: str
    length: int
    values: tuple[int, ...]
    threshold: int | None = None

    def chunk(self, c: int) -> SecretShare:
        return SecretShare(self.index, self.values[c], self.owner, self.kind, self.threshold)

    def to_bytes(self, field: PrimeField = DEFAULT_FIELD) -> bytes:
        head = _SHARE_HEAD.pack(
            self.owner, _KIND_CODES[self.kind], self.index,
            self.threshold or 0, self.length, len(self.values),
        )
        w = field.width
        return head + b"".join([v.to_bytes(w, "big") for v in self.values])

    @classmethod
    def read(cls, r: wire.Reader, field: PrimeField = DEFAULT_FIELD) -> "ByteShare":
        owner, kind, index, threshold, length, count = r.unpack(_SHARE_HEAD)
        w = field.width
        raw = r.take(count * w)
        values = tuple(int.from_bytes(raw[c * w : (c + 1) * w], "big") for c in range(count))
        return cls(index, owner, _KIND_NAMES[kind], length, values, threshold or None)

    @classmethod
    def from_bytes(cls, data: bytes, field: PrimeField = DEFAULT_FIELD) -> "ByteShare":
        r = wire.Reader(data)
        share = cls.read(r, field)
        if not r.done():
            raise ValueError("trailing bytes after share")
        return share


def _split_chunks(secret: bytes, size: int) -> list[int]:
    if not secret:
        return [0]
    return [int.from_bytes(secret[i : i + size], "big") for i in range(0, len(secret), size)]


def _join_chunks(values: Sequence[int], length: int, size: int) -> bytes:
    if length == 0:
        return b""
    out = bytearray()
    for i, v in enumerate(values):
        width = min(size, length - i * size)
        out += v.to_bytes(width, "big")
    return bytes(out)


def share_bytes(
    secret: bytes,
    t: int,
    points: Sequence[int],
    rng: random.Random,
    field: PrimeField = DEFAULT_FIELD,
    *,
    owner: int = 0,
    kind: str = SEED_SHARE,
    allow_short: bool = False,
) -> list[ByteShare]:
    """Share a byte string chunk by chunk with threshold ``t``.

    With ``allow_short`` the secret is dealt even when fewer than ``t`` points
    exist; the result can never be reconstructed.
    """
    if t < 1:
        raise InvalidThreshold(f"threshold must be positive, got {t}")
    if t > len(points) and not allow_short:
        raise InvalidThreshold(f"t={t} exceeds {len(points)} shares")
    if len(points) >= field.p:
        raise FieldTooSmall(f"{len(points)} shares do not fit in GF({field.p})")
    _check_points(points, field.p)
    chunks = _split_chunks(secret, field.chunk_bytes)
    rows = _deal(chunks, t, points, rng, field.p)
    return [
        ByteShare(x, owner, kind, len(secret), tuple(row), t) for x, row in zip(points, rows)
    ]


def reconstruct_bytes(
    shares: Sequence[ByteShare], field: PrimeField = DEFAULT_FIELD, *, verify: bool = True
) -> bytes:
    t = _validate_group(shares, "shares")
    length = shares[0].length
    if any(s.length != length or len(s.values) != len(shares[0].values) for s in shares):
        raise MixedOwner("shares disagree on secret length")
    xs = [s.index for s in shares]
    rows = [list(s.values) for s in shares]
    chunks = _interpolate_rows(xs, rows, t, field.p, verify)
    return _join_chunks(chunks, length, field.chunk_bytes)


# ---------------------------------------------------------------------------
# Key agreement
# ---------------------------------------------------------------------------

PublicKey = Union[int, bytes]
SecretKey = Union[int, bytes]


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey


@dataclass(frozen=True)
class ModPGroup:
    """Classic Diffie-Hellman in the multiplicative group mod a prime ``p``.

    ``secret_bits`` caps exponent size for large groups; ``None`` draws the
    exponent uniformly from ``[1, p-2]``.
    """

    p: int
    g: int
    secret_bits: int | None = None

    def __post_init__(self):
        if not _is_prime(self.p):
            raise ValueError(f"group modulus {self.p} is not prime")
        if not 1 < self.g < self.p - 1:
            raise ValueError("generator out of range")

    @property
    def name(self) -> str:
        return f"modp:{self.p:x}:{self.g}:{self.secret_bits or 0}"

    @property
    def width(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def keypair_from_secret(self, secret: int) -> KeyPair:
        return KeyPair(pow(self.g, secret, self.p), secret)

    def keygen(self, rng: random.Random) -> KeyPair:
        while True:
            if self.secret_bits is None:
                sk = rng.randrange(1, self.p - 1)
            else:
                sk = rng.getrandbits(self.secret_bits) | 1
            pair = self.keypair_from_secret(sk)
            # redraw the rare exponents whose public value validate() rejects
            if 1 < pair.public < self.p - 1:
                return pair

    def validate(self, public: PublicKey) -> None:
        if not isinstance(public, int) or not 1 < public < self.p - 1:
            raise InvalidGroupElement(f"{public!r} is not a valid element mod {self.p}")

    def shared_element(self, peer_public: PublicKey, own_secret: SecretKey) -> int:
        self.validate(peer_public)
        return pow(peer_public, own_secret, self.p)

    def encode_element(self, x: int) -> bytes:
        return wire.fixed_int(x, self.width)

    encode_public = encode_element
    encode_secret = encode_element

    def decode_public(self, data: bytes) -> int:
        return int.from_bytes(data, "big")

    decode_secret = decode_public


@lru_cache(maxsize=8192)
def _x25519_private(secret: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=8192)
def _x25519_public(public: bytes) -> X25519PublicKey:
    return X25519PublicKey.from_public_bytes(public)


@dataclass(frozen=True)
class X25519Group:
    """Elliptic-curve Diffie-Hellman on Curve25519 (32-byte keys)."""

    name = "x25519"
    width = 32

    def keypair_from_secret(self, secret: bytes) -> KeyPair:
        pub = _x25519_private(secret).public_key().public_bytes_raw()
        return KeyPair(pub, secret)

    def keygen(self, rng: random.Random) -> KeyPair:
        return self.keypair_from_secret(rng.getrandbits(256).to_bytes(32, "big"))

    def validate(self, public: PublicKey) -> None:
        if not isinstance(public, bytes) or len(public) != 32:
            raise InvalidGroupElement("x25519 public keys are 32 bytes")

    def shared_element(self, peer_public: PublicKey, own_secret: SecretKey) -> bytes:
        self.validate(peer_public)
        try:
            return _x25519_private(own_secret).exchange(_x25519_public(peer_public))
        except ValueError as exc:  # low-order point gives an all-zero secret
            raise InvalidGroupElement(str(exc)) from exc

    def encode_element(self, x: bytes) -> bytes:
        return x

    encode_public = encode_element
    encode_secret = encode_element

    def decode_public(self, data: bytes) -> bytes:
        return bytes(data)

    decode_secret = decode_public


DHGroup = Union[ModPGroup, X25519Group]

#: P=23, g=5. Only for hand-checkable tests.
TINY_GROUP = ModPGroup(23, 5)

#: RFC 3526 group 14 (2048-bit MODP), 256-bit exponents.
MODP_2048 = ModPGroup(
    int(
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
        "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
        "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
        "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
        16,
    ),
    2,
    secret_bits=256,
)

DEFAULT_GROUP = X25519Group()


def group_from_name(name: str) -> DHGroup:
    if name == "x25519":
        return DEFAULT_GROUP
    if name.startswith("modp:"):
        _, p_hex, g, bits = name.split(":")
        return ModPGroup(int(p_hex, 16), int(g), int(bits) or None)
    raise ValueError(f"unknown group {name!r}")


def keygen(rng: random.Random, group: DHGroup = DEFAULT_GROUP) -> KeyPair:
    return group.keygen(rng)


def key_agree(
    peer_public: PublicKey, own_secret: SecretKey, group: DHGroup = DEFAULT_GROUP
) -> bytes:
    """Shared secret hashed down to a PRG seed; symmetric in the two parties."""
    element = group.shared_element(peer_public, own_secret)
    h = hashlib.blake2b(digest_size=SEED_BYTES, person=b"ccesa-ka")
    h.update(group.encode_element(element))
    return h.digest()


# ---------------------------------------------------------------------------
# Authenticated encryption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuthCiphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return wire.blob(self.nonce) + wire.blob(self.body) + wire.blob(self.tag)

    @classmethod
    def read(cls, r: wire.Reader) -> "AuthCiphertext":
        return cls(r.blob(), r.blob(), r.blob())


def derive_nonce(*labels: object) -> bytes:
    h = hashlib.blake2b(digest_size=NONCE_BYTES, person=b"ccesa-nonce")
    h.update("|".join(str(x) for x in labels).encode())
    return h.digest()


def ae_encrypt(key: bytes, plaintext: bytes, nonce: bytes) -> AuthCiphertext:
    sealed = AESGCM(key).encrypt(nonce, plaintext, None)
    return AuthCiphertext(nonce, sealed[:-TAG_BYTES], sealed[-TAG_BYTES:])


def ae_decrypt(key: bytes, ct: AuthCiphertext) -> bytes:
    try:
        return AESGCM(key).decrypt(ct.nonce, ct.body + ct.tag, None)
    except (InvalidTag, ValueError) as exc:
        raise AuthenticationFailure("ciphertext failed authentication") from exc


# ---------------------------------------------------------------------------
# Residue vectors and the PRG
# ---------------------------------------------------------------------------


def _mask(bits: int) -> np.uint64:
    return np.uint64((1 << bits) - 1)


class ResidueVector:
    """Length-``m`` vector over the integers mod ``2**bits``."""

    __slots__ = ("coords", "bits")

    def __init__(self, coords: Iterable[int] | np.ndarray, bits: int):
        if not 1 <= bits <= 64:
            raise ValueError("bits per coordinate must lie in [1, 64]")
        arr = np.array(coords, dtype=np.uint64)
        if arr.ndim != 1:
            raise ValueError("residue vectors are one-dimensional")
        self.coords = arr & _mask(bits)
        self.bits = bits

    @classmethod
    def zeros(cls, m: int, bits: int) -> "ResidueVector":
        return cls(np.zeros(m, dtype=np.uint64), bits)

    @property
    def m(self) -> int:
        return len(self.coords)

    def _check(self, other: "ResidueVector") -> None:
        if not isinstance(other, ResidueVector):
            raise TypeError("expected ResidueVector")
        if other.bits != self.bits or other.m != self.m:
            raise ValueError("shape or modulus mismatch")

    def __add__(self, other: "ResidueVector") -> "ResidueVector":
        self._check(other)
        return ResidueVector(self.coords + other.coords, self.bits)

    def __sub__(self, other: "ResidueVector") -> "ResidueVector":
        self._check(other)
        return ResidueVector(self.coords - other.coords, self.bits)

    def __neg__(self) -> "ResidueVector":
        return ResidueVector(np.uint64(0) - self.coords, self.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ResidueVector):
            return NotImplemented
        return self.bits == other.bits and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.bits, self.coords.tobytes()))

    def __repr__(self) -> str:
        head = ", ".join(str(int(c)) for c in self.coords[:4])
        more = ", ..." if self.m > 4 else ""
        return f"ResidueVector([{head}{more}], m={self.m}, bits={self.bits})"

    def to_bytes(self) -> bytes:
        w = (self.bits + 7) // 8
        raw = self.coords.astype(">u8").view(np.uint8).reshape(-1, 8)
        return raw[:, 8 - w :].tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, m: int, bits: int) -> "ResidueVector":
        return cls(_unpack_words(data, m, (bits + 7) // 8), bits)


def _unpack_words(data: bytes, m: int, w: int) -> np.ndarray:
    if len(data) != m * w:
        raise ValueError("buffer length does not match vector shape")
    padded = np.zeros((m, 8), dtype=np.uint8)
    padded[:, 8 - w :] = np.frombuffer(data, dtype=np.uint8).reshape(m, w)
    return padded.view(">u8").ravel().astype(np.uint64)


def prg_expand(seed: bytes, m: int, bits: int) -> ResidueVector:
    """Keyed BLAKE2b in counter mode, cut into ``ceil(bits/8)``-byte words."""
    if m < 1:
        raise ValueError("dimension must be positive")
    if not 1 <= bits <= 64:
        raise ValueError("bits per coordinate must lie in [1, 64]")
    w = (bits + 7) // 8
    need = m * w
    blocks = -(-need // 64)
    stream = b"".join(
        hashlib.blake2b(
            ctr.to_bytes(8, "big"), key=seed, digest_size=64, person=b"ccesa-prg"
        ).digest()
        for ctr in range(blocks)
    )
    return ResidueVector(_unpack_words(stream[:need], m, w), bits)

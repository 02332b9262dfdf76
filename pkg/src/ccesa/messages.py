"""Protocol messages and the round transcript.

Every message has a wire encoding (``encode``) whose length is its size in
bytes. Separately, each message carries *cost units*: how many public keys,
secret shares, and model vectors it moves. The transcript converts units to
bits with the configured ``a_K``, ``a_S`` and ``m * R``, which is the cost
model used for bandwidth comparisons. Wire bytes and cost bits are tracked
side by side; they are not expected to agree.

Wire layout (see :mod:`ccesa.wire` for primitives), each message starts with
a ``u8`` type tag:

=====  ================  ==================================================
tag    message           body
=====  ================  ==================================================
1      AdvertiseKeys     u32 client, blob c_pk, blob s_pk
2      KeyBundle         u32 recipient, u32 count, count x (u32 i, blob c_pk, blob s_pk)
3      EncryptedShares   u32 sender, u32 receiver, ct(b), ct(sk)
4      MaskedModel       u32 client, u32 m, u8 R, blob coords
5      SurvivorList      u32 count, count x u32 client
6      ShareResponse     u32 client, u32 count, count x share
=====  ================  ==================================================

``ct`` is ``blob nonce, blob body, blob tag``. A ``share`` is ``u32 owner,
u8 kind, u32 index, u16 threshold, u16 length, u16 chunks`` followed by
``chunks`` field elements of fixed width.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from dataclasses import field as dc_field
from typing import Union

from . import wire
from .crypto import (
    DEFAULT_FIELD,
    DEFAULT_GROUP,
    AuthCiphertext,
    ByteShare,
    DHGroup,
    PrimeField,
    ResidueVector,
    group_from_name,
)

SERVER = 0


@dataclass(frozen=True)
class Codec:
    """Context needed to encode and decode messages."""

    group: DHGroup = DEFAULT_GROUP
    field: PrimeField = DEFAULT_FIELD
    m: int = 1
    R: int = 16


@dataclass(frozen=True)
class AdvertiseKeys:
    client: int
    c_pk: object
    s_pk: object

    TAG = 1
    key_units = 2
    share_units = 0
    vector_units = 0

    def encode(self, codec: Codec) -> bytes:
        g = codec.group
        return b"".join(
            [wire.u8(self.TAG), wire.u32(self.client),
             wire.blob(g.encode_public(self.c_pk)), wire.blob(g.encode_public(self.s_pk))]
        )


@dataclass(frozen=True)
class KeyBundle:
    recipient: int
    entries: tuple[tuple[int, object, object], ...]

    TAG = 2
    share_units = 0
    vector_units = 0

    @property
    def key_units(self) -> int:
        return 2 * len(self.entries)

    def encode(self, codec: Codec) -> bytes:
        g = codec.group
        out = [wire.u8(self.TAG), wire.u32(self.recipient), wire.u32(len(self.entries))]
        for i, c_pk, s_pk in self.entries:
            out += [wire.u32(i), wire.blob(g.encode_public(c_pk)), wire.blob(g.encode_public(s_pk))]
        return b"".join(out)


@dataclass(frozen=True)
class EncryptedShares:
    sender: int
    receiver: int
    b_ct: AuthCiphertext
    s_ct: AuthCiphertext

    TAG = 3
    key_units = 0
    share_units = 2
    vector_units = 0

    def encode(self, codec: Codec) -> bytes:
        return b"".join(
            [wire.u8(self.TAG), wire.u32(self.sender), wire.u32(self.receiver),
             self.b_ct.to_bytes(), self.s_ct.to_bytes()]
        )


@dataclass(frozen=True)
class MaskedModel:
    client: int
    vector: ResidueVector

    TAG = 4
    key_units = 0
    share_units = 0
    vector_units = 1

    def encode(self, codec: Codec) -> bytes:
        v = self.vector
        return b"".join(
            [wire.u8(self.TAG), wire.u32(self.client), wire.u32(v.m), wire.u8(v.bits),
             wire.blob(v.to_bytes())]
        )


@dataclass(frozen=True)
class SurvivorList:
    survivors: tuple[int, ...]

    TAG = 5
    key_units = 0
    share_units = 0
    vector_units = 0

    def encode(self, codec: Codec) -> bytes:
        return b"".join(
            [wire.u8(self.TAG), wire.u32(len(self.survivors))]
            + [wire.u32(i) for i in self.survivors]
        )


@dataclass(frozen=True)
class ShareResponse:
    client: int
    shares: tuple[ByteShare, ...]

    TAG = 6
    key_units = 0
    vector_units = 0

    @property
    def share_units(self) -> int:
        return len(self.shares)

    def encode(self, codec: Codec) -> bytes:
        return b"".join(
            [wire.u8(self.TAG), wire.u32(self.client), wire.u32(len(self.shares))]
            + [s.to_bytes(codec.field) for s in self.shares]
        )


Message = Union[AdvertiseKeys, KeyBundle, EncryptedShares, MaskedModel, SurvivorList, ShareResponse]


def decode_message(data: bytes, codec: Codec) -> Message:
    r = wire.Reader(data)
    tag = r.u8()
    g = codec.group
    if tag == AdvertiseKeys.TAG:
        msg = AdvertiseKeys(r.u32(), g.decode_public(r.blob()), g.decode_public(r.blob()))
    elif tag == KeyBundle.TAG:
        recipient, count = r.u32(), r.u32()
        entries = tuple(
            (r.u32(), g.decode_public(r.blob()), g.decode_public(r.blob())) for _ in range(count)
        )
        msg = KeyBundle(recipient, entries)
    elif tag == EncryptedShares.TAG:
        msg = EncryptedShares(r.u32(), r.u32(), AuthCiphertext.read(r), AuthCiphertext.read(r))
    elif tag == MaskedModel.TAG:
        client, m, bits = r.u32(), r.u32(), r.u8()
        msg = MaskedModel(client, ResidueVector.from_bytes(r.blob(), m, bits))
    elif tag == SurvivorList.TAG:
        msg = SurvivorList(tuple(r.u32() for _ in range(r.u32())))
    elif tag == ShareResponse.TAG:
        client, count = r.u32(), r.u32()
        msg = ShareResponse(client, tuple(ByteShare.read(r, codec.field) for _ in range(count)))
    else:
        raise ValueError(f"unknown message tag {tag}")
    if not r.done():
        raise ValueError("trailing bytes after message")
    return msg


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    step: int
    sender: int
    receiver: int
    message: Message
    cost_bits: int
    codec: Codec = dc_field(repr=False, compare=False)

    @cached_property
    def payload(self) -> bytes:
        """Serialized message; encoded on first use since most runs never look."""
        return self.message.encode(self.codec)

    @property
    def wire_bytes(self) -> int:
        return len(self.payload)


@dataclass
class Transcript:
    """Append-only log of every message on the wire, with per-entity counters.

    Entity ``0`` is the server; clients are ``1..n``. A message's size is
    credited to both its sender and its receiver.
    """

    n: int
    t: int
    m: int
    R: int
    a_K: int
    a_S: int
    group: DHGroup = DEFAULT_GROUP
    field: PrimeField = DEFAULT_FIELD
    round_id: int = 0
    entries: list[Entry] = dc_field(default_factory=list)
    cost_bits: Counter = dc_field(default_factory=Counter)

    @cached_property
    def codec(self) -> Codec:
        return Codec(self.group, self.field, self.m, self.R)

    @property
    def wire_bytes(self) -> Counter:
        """Serialized bytes per entity, credited like ``cost_bits``."""
        out: Counter = Counter()
        for e in self.entries:
            size = e.wire_bytes
            out[e.sender] += size
            out[e.receiver] += size
        return out

    def units_to_bits(self, msg: Message) -> int:
        return (
            msg.key_units * self.a_K
            + msg.share_units * self.a_S
            + msg.vector_units * self.m * self.R
        )

    def record(self, step: int, sender: int, receiver: int, msg: Message) -> Entry:
        entry = Entry(step, sender, receiver, msg, self.units_to_bits(msg), self.codec)
        self.entries.append(entry)
        self.cost_bits[sender] += entry.cost_bits
        self.cost_bits[receiver] += entry.cost_bits
        return entry

    def messages(self, step: int | None = None, kind: type | None = None):
        for e in self.entries:
            if (step is None or e.step == step) and (kind is None or isinstance(e.message, kind)):
                yield e

    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(wire.u8(e.step) + wire.u32(e.sender) + wire.u32(e.receiver))
            h.update(wire.blob(e.payload))
        return h.hexdigest()

    # -- JSON ---------------------------------------------------------------

    def header(self) -> dict:
        return {
            "n": self.n, "t": self.t, "m": self.m, "R": self.R,
            "a_K": self.a_K, "a_S": self.a_S,
            "group": self.group.name, "field_p": hex(self.field.p),
            "round_id": self.round_id,
        }

    def to_json(self) -> str:
        doc = {
            "header": self.header(),
            "entries": [
                {"step": e.step, "sender": e.sender, "receiver": e.receiver,
                 "payload": e.payload.hex()}
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        doc = json.loads(text)
        h = doc["header"]
        tr = cls(
            n=h["n"], t=h["t"], m=h["m"], R=h["R"], a_K=h["a_K"], a_S=h["a_S"],
            group=group_from_name(h["group"]), field=PrimeField(int(h["field_p"], 16)),
            round_id=h.get("round_id", 0),
        )
        codec = tr.codec
        for e in doc["entries"]:
            msg = decode_message(bytes.fromhex(e["payload"]), codec)
            tr.record(e["step"], e["sender"], e["receiver"], msg)
        return tr

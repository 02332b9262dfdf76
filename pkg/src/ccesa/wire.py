"""Length-prefixed big-endian encoding used for every byte on the wire.

Layout rules (all integers unsigned, big-endian):

* ``u8`` / ``u16`` / ``u32``: fixed-width integers.
* ``blob``: ``u32`` byte length followed by the raw bytes.
* ``int(w)``: an integer written as exactly ``w`` bytes; ``w`` is fixed by
  context (field width, group width) and never transmitted.
"""

from __future__ import annotations

import struct


def u8(x: int) -> bytes:
    return struct.pack(">B", x)


def u16(x: int) -> bytes:
    return struct.pack(">H", x)


def u32(x: int) -> bytes:
    return struct.pack(">I", x)


def blob(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def fixed_int(x: int, width: int) -> bytes:
    return x.to_bytes(width, "big")


class Reader:
    """Cursor over an encoded buffer."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.pos = offset

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise ValueError("truncated buffer")
        out = self.data[self.pos : self.pos + k]
        self.pos += k
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def fixed_int(self, width: int) -> int:
        return int.from_bytes(self.take(width), "big")

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def done(self) -> bool:
        return self.pos == len(self.data)

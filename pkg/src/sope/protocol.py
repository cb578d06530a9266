"""Framed binary wire protocol.

A frame is a 4-byte big-endian payload length, a 1-byte message kind and the
payload. All integers are big-endian; encodings travel as unsigned 64-bit
values with all-ones meaning +infinity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

HEADER = struct.Struct(">IB")
CIPHER_BYTES = 16
MAX_PAYLOAD = 64 << 20


class ProtocolError(Exception):
    pass


class Kind(IntEnum):
    BEGIN_INSERT = 1
    NODE = 2
    CHOOSE_CHILD = 3
    LEAF_POSITION = 4
    ENCODING = 5
    ACK = 6
    BEGIN_POINT_QUERY = 7
    BEGIN_RANGE_QUERY = 8
    BEGIN_SKYLINE = 9
    BEGIN_GLOBAL_SKYLINE = 10
    BEGIN_CONSTRAINED = 11
    RESULT_SET = 12
    BOOL_RESULT = 13
    NOT_FOUND = 14
    ERROR = 15
    STATS_REQUEST = 16
    STATS = 17


class Status(IntEnum):
    """What the client reports at a leaf."""

    NEW = 0              # insert this ciphertext at the position
    PRESENT = 1          # value already stored at the position
    ABSENT = 2           # query value would sit at the position


class ErrorCode(IntEnum):
    PROTOCOL = 1
    DUPLICATE_ID = 2
    BAD_PARAMETER = 3
    UNKNOWN_KIND = 4
    INTERNAL = 5


_REGISTRY: dict = {}


def _message(kind):
    def register(cls):
        cls.KIND = kind
        _REGISTRY[kind] = cls
        return cls
    return register


def _empty(cls):
    cls.pack = lambda self: b""
    cls.unpack = classmethod(lambda c, payload: c._check_empty(payload))
    return cls


class _Base:
    KIND: Kind

    @classmethod
    def _check_empty(cls, payload):
        if payload:
            raise ProtocolError(f"{cls.__name__} carries no payload")
        return cls()


@_message(Kind.BEGIN_INSERT)
@dataclass
class BeginInsert(_Base):
    id: int

    def pack(self):
        return struct.pack(">Q", self.id)

    @classmethod
    def unpack(cls, payload):
        return cls(*_unpack(">Q", payload))


@_message(Kind.NODE)
@dataclass
class Node(_Base):
    """Keys of one B+-tree node: leaf keys or index separators."""

    leaf: bool
    keys: list

    def pack(self):
        return struct.pack(">BH", int(self.leaf), len(self.keys)) + b"".join(self.keys)

    @classmethod
    def unpack(cls, payload):
        leaf, count = _unpack_prefix(">BH", payload)
        body = payload[3:]
        if len(body) != count * CIPHER_BYTES:
            raise ProtocolError("NODE length does not match its key count")
        keys = [body[i * CIPHER_BYTES:(i + 1) * CIPHER_BYTES] for i in range(count)]
        return cls(bool(leaf), keys)


@_message(Kind.CHOOSE_CHILD)
@dataclass
class ChooseChild(_Base):
    index: int

    def pack(self):
        return struct.pack(">H", self.index)

    @classmethod
    def unpack(cls, payload):
        return cls(*_unpack(">H", payload))


@_message(Kind.LEAF_POSITION)
@dataclass
class LeafPosition(_Base):
    position: int
    status: Status
    cipher: bytes = None

    def pack(self):
        head = struct.pack(">HB", self.position, self.status)
        if self.status == Status.NEW:
            if self.cipher is None or len(self.cipher) != CIPHER_BYTES:
                raise ProtocolError("NEW leaf position needs a 16-byte ciphertext")
            return head + self.cipher
        return head

    @classmethod
    def unpack(cls, payload):
        position, status = _unpack_prefix(">HB", payload)
        try:
            status = Status(status)
        except ValueError:
            raise ProtocolError(f"bad leaf status {status}") from None
        rest = payload[3:]
        if status == Status.NEW:
            if len(rest) != CIPHER_BYTES:
                raise ProtocolError("NEW leaf position needs a 16-byte ciphertext")
            return cls(position, status, rest)
        if rest:
            raise ProtocolError("trailing bytes after leaf position")
        return cls(position, status)


@_message(Kind.ENCODING)
@dataclass
class Encoding(_Base):
    axis: int
    value: int

    def pack(self):
        return struct.pack(">HQ", self.axis, self.value)

    @classmethod
    def unpack(cls, payload):
        return cls(*_unpack(">HQ", payload))


@_message(Kind.ACK)
@_empty
@dataclass
class Ack(_Base):
    pass


@_message(Kind.BEGIN_POINT_QUERY)
@_empty
@dataclass
class BeginPointQuery(_Base):
    pass


@_message(Kind.BEGIN_RANGE_QUERY)
@_empty
@dataclass
class BeginRangeQuery(_Base):
    pass


@_message(Kind.BEGIN_SKYLINE)
@_empty
@dataclass
class BeginSkyline(_Base):
    pass


@_message(Kind.BEGIN_GLOBAL_SKYLINE)
@dataclass
class BeginGlobalSkyline(_Base):
    k: int

    def pack(self):
        return struct.pack(">H", self.k)

    @classmethod
    def unpack(cls, payload):
        return cls(*_unpack(">H", payload))


@_message(Kind.BEGIN_CONSTRAINED)
@dataclass
class BeginConstrained(_Base):
    """Constrained skyline (``k == 0``) or constrained k-global skyline."""

    box: bool
    k: int

    def pack(self):
        return struct.pack(">BH", int(self.box), self.k)

    @classmethod
    def unpack(cls, payload):
        box, k = _unpack(">BH", payload)
        return cls(bool(box), k)


@_message(Kind.RESULT_SET)
@dataclass
class ResultSet(_Base):
    """Items are ``(id, layer, ciphertexts)``; ``layer`` is 0 unless layered."""

    d: int
    items: list = field(default_factory=list)

    def pack(self):
        parts = [struct.pack(">BI", self.d, len(self.items))]
        for ident, layer, ciphers in self.items:
            if len(ciphers) != self.d:
                raise ProtocolError("result item dimension mismatch")
            parts.append(struct.pack(">QH", ident, layer))
            parts.extend(ciphers)
        return b"".join(parts)

    @classmethod
    def unpack(cls, payload):
        d, count = _unpack_prefix(">BI", payload)
        size = 10 + d * CIPHER_BYTES
        body = payload[5:]
        if len(body) != count * size:
            raise ProtocolError("RESULT_SET length does not match its item count")
        items = []
        for i in range(count):
            off = i * size
            ident, layer = struct.unpack_from(">QH", body, off)
            off += 10
            ciphers = tuple(body[off + j * CIPHER_BYTES: off + (j + 1) * CIPHER_BYTES]
                            for j in range(d))
            items.append((ident, layer, ciphers))
        return cls(d, items)


@_message(Kind.BOOL_RESULT)
@dataclass
class BoolResult(_Base):
    value: bool

    def pack(self):
        return struct.pack(">B", int(self.value))

    @classmethod
    def unpack(cls, payload):
        return cls(bool(_unpack(">B", payload)[0]))


@_message(Kind.NOT_FOUND)
@_empty
@dataclass
class NotFound(_Base):
    """Point query ended early: a coordinate is absent from its axis."""


@_message(Kind.ERROR)
@dataclass
class Error(_Base):
    code: int
    message: str = ""

    def pack(self):
        return struct.pack(">H", self.code) + self.message.encode("utf-8")

    @classmethod
    def unpack(cls, payload):
        (code,) = _unpack_prefix(">H", payload)
        return cls(code, payload[2:].decode("utf-8", "replace"))


@_message(Kind.STATS_REQUEST)
@_empty
@dataclass
class StatsRequest(_Base):
    pass


@_message(Kind.STATS)
@dataclass
class Stats(_Base):
    """Metrics snapshot as JSON lines, one ``{tree, reads, writes}`` record each."""

    text: str

    def pack(self):
        return self.text.encode("utf-8")

    @classmethod
    def unpack(cls, payload):
        return cls(payload.decode("utf-8"))


def _unpack(fmt, payload):
    try:
        return struct.unpack(fmt, payload)
    except struct.error as exc:
        raise ProtocolError(f"bad payload: {exc}") from None


def _unpack_prefix(fmt, payload):
    try:
        return struct.unpack_from(fmt, payload)
    except struct.error as exc:
        raise ProtocolError(f"bad payload: {exc}") from None


# -- framing --------------------------------------------------------------------

def encode(msg) -> bytes:
    payload = msg.pack()
    return HEADER.pack(len(payload), msg.KIND) + payload


def decode(frame: bytes):
    if len(frame) < HEADER.size:
        raise ProtocolError("short frame")
    length, kind = HEADER.unpack_from(frame)
    if len(frame) != HEADER.size + length:
        raise ProtocolError("frame length does not match its header")
    return decode_payload(kind, frame[HEADER.size:])


def decode_payload(kind: int, payload: bytes):
    cls = _REGISTRY.get(kind)
    if cls is None:
        raise ProtocolError(f"unknown message kind {kind}")
    return cls.unpack(payload)


def read_frame(recv_exact) -> bytes:
    """Read one whole frame using ``recv_exact(n) -> bytes``; None at EOF."""
    head = recv_exact(HEADER.size)
    if head is None:
        return None
    length, _ = HEADER.unpack(head)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {length} bytes exceeds the limit")
    body = recv_exact(length) if length else b""
    if body is None:
        raise ProtocolError("connection closed inside a frame")
    return head + body

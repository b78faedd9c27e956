"""Canonical binary encoding of protocol values and wire frames.

The body encoding is self-describing (one type byte per value) and
canonical: sets and dict keys are emitted in sorted order of their encodings,
so equal values always produce identical bytes. That property is what lets
state digests be compared across hosts.

Frame layout (big-endian)::

    magic  "MP"   2 bytes
    version       1 byte
    tag           1 byte   message type
    seq           8 bytes  per-sender sequence number
    length        4 bytes  body length
    body          length bytes: pack((src, dst, *fields))
"""
from __future__ import annotations

import dataclasses
import struct

from .. import core
from ..core import Configuration, Envelope, Round, Value, ValueKind

MAGIC = b"MP"
VERSION = 1
HEADER = struct.Struct(">2sBBQI")
HEADER_SIZE = HEADER.size
MAX_BODY = 64 * 1024 * 1024


class DecodeError(ValueError):
    pass


class TruncatedFrame(DecodeError):
    pass


class BadMagic(DecodeError):
    pass


class VersionMismatch(DecodeError):
    pass


class UnknownTag(DecodeError):
    pass


# type bytes
T_NONE, T_FALSE, T_TRUE, T_INT, T_NEGINT, T_STR, T_BYTES, T_LIST, T_SET, T_DICT = range(10)
T_ROUND, T_CONFIG, T_VALUE, T_MESSAGE = 0x10, 0x11, 0x12, 0x13

_FIELDS = {cls: tuple(f.name for f in dataclasses.fields(cls)) for cls in core.MESSAGE_TYPES}


def _varint(n: int, out: bytearray) -> None:
    while n >= 0x80:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    out.append(n)


def _pack(v, out: bytearray) -> None:
    t = type(v)
    if t is Round:
        out.append(T_ROUND)
        c = v.counter
        if c < 0:
            out.append(0)
        else:
            out.append(1)
            _varint(c, out)
            _pack(v.owner, out)
            _varint(v.sub, out)
    elif t is int or t is ValueKind or (isinstance(v, int) and t is not bool):
        v = int(v)
        if v >= 0:
            out.append(T_INT)
            _varint(v, out)
        else:
            out.append(T_NEGINT)
            _varint(-v, out)
    elif t is str:
        b = v.encode()
        out.append(T_STR)
        _varint(len(b), out)
        out += b
    elif t is bytes or t is bytearray:
        out.append(T_BYTES)
        _varint(len(v), out)
        out += v
    elif t is tuple or t is list:
        out.append(T_LIST)
        _varint(len(v), out)
        for x in v:
            _pack(x, out)
    elif t is frozenset or t is set:
        items = sorted(pack(x) for x in v)
        out.append(T_SET)
        _varint(len(items), out)
        for b in items:
            out += b
    elif t is dict:
        items = sorted((pack(k), pack(x)) for k, x in v.items())
        out.append(T_DICT)
        _varint(len(items), out)
        for kb, vb in items:
            out += kb
            out += vb
    elif v is None:
        out.append(T_NONE)
    elif v is True:
        out.append(T_TRUE)
    elif v is False:
        out.append(T_FALSE)
    elif t is Value:
        out.append(T_VALUE)
        out.append(int(v.kind))
        _pack(v.payload, out)
        _pack(v.client, out)
        _varint(v.seq, out)
    elif t is Configuration:
        out.append(T_CONFIG)
        _pack(v.label, out)
        _pack(v.acceptors, out)
        _pack(v.phase1_quorums, out)
        _pack(v.phase2_quorums, out)
    elif t in _FIELDS:
        out.append(T_MESSAGE)
        out.append(t.TAG)
        for name in _FIELDS[t]:
            _pack(getattr(v, name), out)
    else:
        raise TypeError(f"cannot encode {t.__name__}")


def pack(value) -> bytes:
    out = bytearray()
    _pack(value, out)
    return bytes(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def byte(self) -> int:
        if self.pos >= len(self.buf):
            raise TruncatedFrame("unexpected end of body")
        b = self.buf[self.pos]
        self.pos += 1
        return b

    def varint(self) -> int:
        shift = n = 0
        while True:
            b = self.byte()
            n |= (b & 0x7F) << shift
            if b < 0x80:
                return n
            shift += 7

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise TruncatedFrame("unexpected end of body")
        chunk = bytes(self.buf[self.pos:end])
        self.pos = end
        return chunk

    def value(self):
        t = self.byte()
        if t == T_INT:
            return self.varint()
        if t == T_NEGINT:
            return -self.varint()
        if t == T_STR:
            return self.take(self.varint()).decode()
        if t == T_BYTES:
            return self.take(self.varint())
        if t == T_ROUND:
            if self.byte() == 0:
                return core.BOTTOM
            counter = self.varint()
            owner = self.value()
            return Round(counter, owner, self.varint())
        if t == T_LIST:
            return tuple(self.value() for _ in range(self.varint()))
        if t == T_SET:
            return frozenset(self.value() for _ in range(self.varint()))
        if t == T_DICT:
            n = self.varint()
            d = {}
            for _ in range(n):
                k = self.value()
                d[k] = self.value()
            return d
        if t == T_NONE:
            return None
        if t == T_TRUE:
            return True
        if t == T_FALSE:
            return False
        if t == T_VALUE:
            kind = ValueKind(self.byte())
            payload = self.value()
            client = self.value()
            return Value(payload, kind, client, self.varint())
        if t == T_CONFIG:
            return Configuration(self.value(), self.value(), self.value(), self.value())
        if t == T_MESSAGE:
            cls = core.MESSAGE_BY_TAG.get(self.byte())
            if cls is None:
                raise UnknownTag("unknown nested message tag")
            return cls(*(self.value() for _ in _FIELDS[cls]))
        raise DecodeError(f"unknown type byte 0x{t:02x}")


def unpack(data: bytes):
    reader = _Reader(data)
    v = reader.value()
    if reader.pos != len(data):
        raise DecodeError("trailing bytes after value")
    return v


# --------------------------------------------------------------------------
# Frames
# --------------------------------------------------------------------------

def encode(env: Envelope) -> bytes:
    msg = env.msg
    cls = type(msg)
    if cls not in _FIELDS:
        raise TypeError(f"not a protocol message: {cls.__name__}")
    out = bytearray()
    out.append(T_LIST)
    fields = _FIELDS[cls]
    _varint(2 + len(fields), out)
    _pack(env.src, out)
    _pack(env.dst, out)
    for name in fields:
        _pack(getattr(msg, name), out)
    return HEADER.pack(MAGIC, VERSION, cls.TAG, env.seq, len(out)) + bytes(out)


def encode_message(msg, src: str = "", dst: str = "", seq: int = 0) -> bytes:
    return encode(Envelope(src, dst, seq, msg))


def parse_header(header: bytes):
    """Validate a frame header; returns ``(tag, seq, body_length)``."""
    if len(header) < HEADER_SIZE:
        raise TruncatedFrame(f"header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, tag, seq, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"unsupported frame version {version}")
    if tag not in core.MESSAGE_BY_TAG:
        raise UnknownTag(f"unknown message tag {tag}")
    if length > MAX_BODY:
        raise DecodeError(f"frame body too large: {length}")
    return tag, seq, length


def decode_body(tag: int, seq: int, body: bytes) -> Envelope:
    cls = core.MESSAGE_BY_TAG[tag]
    fields = unpack(body)
    if not isinstance(fields, tuple) or len(fields) != 2 + len(_FIELDS[cls]):
        raise DecodeError(f"malformed body for {cls.__name__}")
    src, dst, *rest = fields
    return Envelope(src, dst, seq, cls(*rest))


def decode(data: bytes) -> Envelope:
    """Decode exactly one frame."""
    tag, seq, length = parse_header(data)
    body = data[HEADER_SIZE:]
    if len(body) < length:
        raise TruncatedFrame(f"body needs {length} bytes, got {len(body)}")
    if len(body) > length:
        raise DecodeError("trailing bytes after frame")
    return decode_body(tag, seq, body)


def split_frames(buffer: bytearray):
    """Pop every complete frame from ``buffer``; yields envelopes."""
    while len(buffer) >= HEADER_SIZE:
        tag, seq, length = parse_header(bytes(buffer[:HEADER_SIZE]))
        end = HEADER_SIZE + length
        if len(buffer) < end:
            return
        body = bytes(buffer[HEADER_SIZE:end])
        del buffer[:end]
        yield decode_body(tag, seq, body)


# Journal records share the body encoding, each prefixed with a u32 length.

RECORD_LEN = struct.Struct(">I")


def encode_record(record) -> bytes:
    body = pack(record)
    return RECORD_LEN.pack(len(body)) + body


def decode_records(data: bytes):
    pos = 0
    out = []
    while pos < len(data):
        if pos + 4 > len(data):
            break  # torn tail write
        (n,) = RECORD_LEN.unpack_from(data, pos)
        if pos + 4 + n > len(data):
            break
        out.append(unpack(data[pos + 4:pos + 4 + n]))
        pos += 4 + n
    return out

"""AMQP 0-9-1 connection negotiation frames."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .common import ProtocolError

PROTOCOL_HEADER = b"AMQP\x00\x00\x09\x01"
FRAME_METHOD = 1
FRAME_END = 0xCE

CONNECTION = 10
START, START_OK, TUNE, TUNE_OK, OPEN, OPEN_OK, CLOSE, CLOSE_OK = 10, 11, 30, 31, 40, 41, 50, 51

ACCESS_REFUSED = 403


def shortstr(s: str | bytes) -> bytes:
    b = s.encode() if isinstance(s, str) else s
    if len(b) > 255:
        raise ValueError("shortstr too long")
    return bytes([len(b)]) + b


def longstr(s: str | bytes) -> bytes:
    b = s.encode() if isinstance(s, str) else s
    return struct.pack("!I", len(b)) + b


def encode_table(table: dict) -> bytes:
    out = bytearray()
    for key in sorted(table):
        value = table[key]
        out += shortstr(key)
        if isinstance(value, bool):
            out += b"t" + bytes([1 if value else 0])
        elif isinstance(value, int):
            out += b"l" + struct.pack("!q", value)
        elif isinstance(value, dict):
            out += b"F" + encode_table(value)
        elif value is None:
            out += b"V"
        else:
            out += b"S" + longstr(str(value))
    return struct.pack("!I", len(out)) + bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ProtocolError("truncated AMQP payload")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def shortstr(self) -> str:
        (n,) = self.unpack("!B")
        return self.take(n).decode(errors="replace")

    def longstr(self) -> bytes:
        (n,) = self.unpack("!I")
        return self.take(n)

    def table(self) -> dict:
        (n,) = self.unpack("!I")
        sub = _Reader(self.take(n))
        out = {}
        while sub.off < len(sub.data):
            key = sub.shortstr()
            out[key] = sub.value()
        return out

    def value(self):
        kind = self.take(1)
        if kind == b"t":
            return bool(self.take(1)[0])
        if kind == b"b":
            return self.unpack("!b")[0]
        if kind == b"B":
            return self.unpack("!B")[0]
        if kind in (b"U", b"s"):
            return self.unpack("!h")[0]
        if kind == b"u":
            return self.unpack("!H")[0]
        if kind == b"I":
            return self.unpack("!i")[0]
        if kind == b"i":
            return self.unpack("!I")[0]
        if kind in (b"l", b"L"):
            return self.unpack("!q")[0]
        if kind == b"T":
            return self.unpack("!Q")[0]
        if kind == b"S":
            return self.longstr().decode(errors="replace")
        if kind == b"x":
            return self.longstr().hex()
        if kind == b"F":
            return self.table()
        if kind == b"A":
            (n,) = self.unpack("!I")
            sub = _Reader(self.take(n))
            items = []
            while sub.off < len(sub.data):
                items.append(sub.value())
            return items
        if kind == b"V":
            return None
        raise ProtocolError(f"unknown field type {kind!r}")


def encode_method(channel: int, class_id: int, method_id: int, args: bytes) -> bytes:
    payload = struct.pack("!HH", class_id, method_id) + args
    return struct.pack("!BHI", FRAME_METHOD, channel, len(payload)) + payload + bytes([FRAME_END])


def split_frames(buf: bytes) -> tuple[list[tuple[int, int, bytes]], bytes]:
    out, off = [], 0
    while len(buf) - off >= 7:
        ftype, channel, size = struct.unpack_from("!BHI", buf, off)
        end = off + 7 + size
        if end + 1 > len(buf):
            break
        if buf[end] != FRAME_END:
            raise ProtocolError("missing frame-end octet")
        out.append((ftype, channel, buf[off + 7:end]))
        off = end + 1
    return out, buf[off:]


def decode_method(payload: bytes) -> tuple[int, int, _Reader]:
    r = _Reader(payload)
    class_id, method_id = r.unpack("!HH")
    return class_id, method_id, r


@dataclass
class ConnectionStart:
    version_major: int
    version_minor: int
    server_properties: dict = field(default_factory=dict)
    mechanisms: list[str] = field(default_factory=list)
    locales: list[str] = field(default_factory=list)


def encode_start(start: ConnectionStart) -> bytes:
    args = (bytes([start.version_major, start.version_minor]) + encode_table(start.server_properties)
            + longstr(" ".join(start.mechanisms)) + longstr(" ".join(start.locales)))
    return encode_method(0, CONNECTION, START, args)


def decode_start(r: _Reader) -> ConnectionStart:
    major, minor = r.unpack("!BB")
    props = r.table()
    mechs = r.longstr().decode(errors="replace").split()
    locales = r.longstr().decode(errors="replace").split()
    return ConnectionStart(major, minor, props, mechs, locales)


def encode_start_ok(client_properties: dict, mechanism: str, response: bytes, locale: str = "en_US") -> bytes:
    args = encode_table(client_properties) + shortstr(mechanism) + longstr(response) + shortstr(locale)
    return encode_method(0, CONNECTION, START_OK, args)


def decode_start_ok(r: _Reader) -> tuple[dict, str, bytes, str]:
    props = r.table()
    return props, r.shortstr(), r.longstr(), r.shortstr()


def encode_tune(channel_max: int = 2047, frame_max: int = 131072, heartbeat: int = 60) -> bytes:
    return encode_method(0, CONNECTION, TUNE, struct.pack("!HIH", channel_max, frame_max, heartbeat))


def encode_close(code: int, text: str, class_id: int = 0, method_id: int = 0) -> bytes:
    return encode_method(0, CONNECTION, CLOSE, struct.pack("!H", code) + shortstr(text)
                         + struct.pack("!HH", class_id, method_id))


def decode_close(r: _Reader) -> tuple[int, str]:
    (code,) = r.unpack("!H")
    return code, r.shortstr()


def plain_response(user: str, password: str) -> bytes:
    return b"\x00" + user.encode() + b"\x00" + password.encode()


"""MQTT 3.1.1 control packets (the subset a scanner and a toy broker need)."""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .common import NeedMore, ProtocolError

CONNECT, CONNACK, PUBLISH, SUBSCRIBE, SUBACK, DISCONNECT = 1, 2, 3, 8, 9, 14

CONNACK_CODES = {
    0: "accepted",
    1: "unacceptable protocol version",
    2: "identifier rejected",
    3: "server unavailable",
    4: "bad user name or password",
    5: "not authorized",
}


def encode_varint(n: int) -> bytes:
    if not 0 <= n <= 268_435_455:
        raise ValueError("remaining length out of range")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            byte |= 0x80
        out.append(byte)
        if not n:
            return bytes(out)


def decode_varint(buf: bytes, offset: int) -> tuple[int, int]:
    value, mult = 0, 1
    for i in range(4):
        if offset + i >= len(buf):
            raise NeedMore
        b = buf[offset + i]
        value += (b & 0x7F) * mult
        if not b & 0x80:
            return value, offset + i + 1
        mult <<= 7
    raise ProtocolError("malformed remaining length")


def _str(s: str | bytes) -> bytes:
    b = s.encode() if isinstance(s, str) else s
    return struct.pack("!H", len(b)) + b


def _read_str(body: bytes, off: int) -> tuple[bytes, int]:
    if off + 2 > len(body):
        raise ProtocolError("truncated string")
    (n,) = struct.unpack_from("!H", body, off)
    if off + 2 + n > len(body):
        raise ProtocolError("truncated string")
    return body[off + 2:off + 2 + n], off + 2 + n


def packet(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | flags]) + encode_varint(len(body)) + body


def split_packets(buf: bytes) -> tuple[list[tuple[int, int, bytes]], bytes]:
    """Cut complete packets off ``buf``; returns ([(type, flags, body)], rest)."""
    out = []
    off = 0
    while off < len(buf):
        try:
            length, body_off = decode_varint(buf, off + 1)
        except NeedMore:
            break
        if body_off + length > len(buf):
            break
        first = buf[off]
        out.append((first >> 4, first & 0x0F, buf[body_off:body_off + length]))
        off = body_off + length
    return out, buf[off:]


def encode_connect(client_id: str, username: str | None = None, password: str | None = None,
                   keepalive: int = 60, clean_session: bool = True) -> bytes:
    flags = 0x02 if clean_session else 0
    payload = _str(client_id)
    if username is not None:
        flags |= 0x80
        payload += _str(username)
    if password is not None:
        flags |= 0x40
        payload += _str(password)
    body = _str("MQTT") + bytes([4, flags]) + struct.pack("!H", keepalive) + payload
    return packet(CONNECT, 0, body)


@dataclass
class Connect:
    protocol_name: str
    level: int
    client_id: str
    username: str | None
    password: str | None
    keepalive: int


def decode_connect(body: bytes) -> Connect:
    name, off = _read_str(body, 0)
    if off + 4 > len(body):
        raise ProtocolError("truncated CONNECT")
    level, flags = body[off], body[off + 1]
    (keepalive,) = struct.unpack_from("!H", body, off + 2)
    off += 4
    client_id, off = _read_str(body, off)
    username = password = None
    if flags & 0x04:  # will flag: skip topic + message
        _, off = _read_str(body, off)
        _, off = _read_str(body, off)
    if flags & 0x80:
        u, off = _read_str(body, off)
        username = u.decode(errors="replace")
    if flags & 0x40:
        p, off = _read_str(body, off)
        password = p.decode(errors="replace")
    return Connect(name.decode(errors="replace"), level, client_id.decode(errors="replace"),
                   username, password, keepalive)


def encode_connack(code: int, session_present: bool = False) -> bytes:
    return packet(CONNACK, 0, bytes([1 if session_present else 0, code]))


def decode_connack(flags: int, body: bytes) -> tuple[bool, int]:
    if flags != 0 or len(body) != 2 or body[0] & 0xFE:
        raise ProtocolError("malformed CONNACK")
    return bool(body[0] & 1), body[1]


def encode_subscribe(packet_id: int, topics: list[tuple[str, int]]) -> bytes:
    body = struct.pack("!H", packet_id) + b"".join(_str(t) + bytes([q]) for t, q in topics)
    return packet(SUBSCRIBE, 0x02, body)


def decode_subscribe(body: bytes) -> tuple[int, list[tuple[str, int]]]:
    if len(body) < 2:
        raise ProtocolError("truncated SUBSCRIBE")
    (pid,) = struct.unpack_from("!H", body, 0)
    off, topics = 2, []
    while off < len(body):
        t, off = _read_str(body, off)
        if off >= len(body):
            raise ProtocolError("missing QoS")
        topics.append((t.decode(errors="replace"), body[off]))
        off += 1
    return pid, topics


def encode_suback(packet_id: int, codes: list[int]) -> bytes:
    return packet(SUBACK, 0, struct.pack("!H", packet_id) + bytes(codes))


def encode_publish(topic: str, payload: bytes, retain: bool = False) -> bytes:
    return packet(PUBLISH, 0x01 if retain else 0, _str(topic) + payload)


def decode_publish(flags: int, body: bytes) -> tuple[str, bytes]:
    topic, off = _read_str(body, 0)
    if (flags >> 1) & 0x03:
        off += 2
    return topic.decode(errors="replace"), body[off:]


def encode_disconnect() -> bytes:
    return packet(DISCONNECT, 0, b"")

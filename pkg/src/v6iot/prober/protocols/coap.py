"""CoAP (RFC 7252) message codec, enough for GET /.well-known/core."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .common import ProtocolError

CON, NON, ACK, RST = 0, 1, 2, 3
GET = 0x01
CONTENT = 0x45  # 2.05
NOT_FOUND = 0x84  # 4.04
URI_PATH = 11
CONTENT_FORMAT = 12
LINK_FORMAT = 40


def code_text(code: int) -> str:
    return f"{code >> 5}.{code & 0x1F:02d}"


@dataclass
class Message:
    mtype: int
    code: int
    message_id: int
    token: bytes = b""
    options: list[tuple[int, bytes]] = field(default_factory=list)
    payload: bytes = b""

    def uri_path(self) -> str:
        return "/" + "/".join(v.decode(errors="replace") for n, v in self.options if n == URI_PATH)


def _opt_nibble(value: int) -> tuple[int, bytes]:
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    return 14, struct.pack("!H", value - 269)


def encode(msg: Message) -> bytes:
    if len(msg.token) > 8:
        raise ValueError("token longer than 8 bytes")
    out = bytearray([(1 << 6) | (msg.mtype << 4) | len(msg.token), msg.code])
    out += struct.pack("!H", msg.message_id) + msg.token
    last = 0
    for number, value in sorted(msg.options, key=lambda o: o[0]):
        dn, dext = _opt_nibble(number - last)
        ln, lext = _opt_nibble(len(value))
        out.append((dn << 4) | ln)
        out += dext + lext + value
        last = number
    if msg.payload:
        out += b"\xff" + msg.payload
    return bytes(out)


def _ext(nibble: int, data: bytes, off: int) -> tuple[int, int]:
    if nibble < 13:
        return nibble, off
    if nibble == 13:
        if off >= len(data):
            raise ProtocolError("truncated option")
        return data[off] + 13, off + 1
    if nibble == 14:
        if off + 2 > len(data):
            raise ProtocolError("truncated option")
        return struct.unpack_from("!H", data, off)[0] + 269, off + 2
    raise ProtocolError("reserved option nibble")


def decode(data: bytes) -> Message:
    if len(data) < 4:
        raise ProtocolError("datagram shorter than CoAP header")
    first, code = data[0], data[1]
    if first >> 6 != 1:
        raise ProtocolError("not CoAP version 1")
    tkl = first & 0x0F
    if tkl > 8:
        raise ProtocolError("invalid token length")
    (mid,) = struct.unpack_from("!H", data, 2)
    off = 4 + tkl
    if off > len(data):
        raise ProtocolError("truncated token")
    token = data[4:off]
    options, number = [], 0
    payload = b""
    while off < len(data):
        byte = data[off]
        off += 1
        if byte == 0xFF:
            payload = data[off:]
            if not payload:
                raise ProtocolError("payload marker without payload")
            break
        delta, off = _ext(byte >> 4, data, off)
        length, off = _ext(byte & 0x0F, data, off)
        number += delta
        if off + length > len(data):
            raise ProtocolError("truncated option value")
        options.append((number, data[off:off + length]))
        off += length
    return Message((first >> 4) & 0x03, code, mid, token, options, payload)


def well_known_core_request(message_id: int, token: bytes) -> Message:
    return Message(CON, GET, message_id, token, [(URI_PATH, b".well-known"), (URI_PATH, b"core")])


def parse_link_format(payload: bytes) -> list[str]:
    text = payload.decode(errors="replace")
    out = []
    for link in text.split(","):
        link = link.strip()
        if link.startswith("<") and ">" in link:
            out.append(link[1:link.index(">")])
    return out

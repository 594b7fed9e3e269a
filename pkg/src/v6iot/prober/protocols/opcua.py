"""OPC UA binary: HEL/ACK, OpenSecureChannel (SecurityPolicy None) and GetEndpoints."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .common import ProtocolError

SECURITY_POLICY_NONE = "http://opcfoundation.org/UA/SecurityPolicy#None"
TRANSPORT_BINARY = "http://opcfoundation.org/UA-Profile/Transport/uatcp-uasc-uabinary"

# binary encoding ids of the service structures
OPEN_SECURE_CHANNEL_REQUEST = 446
OPEN_SECURE_CHANNEL_RESPONSE = 449
CLOSE_SECURE_CHANNEL_REQUEST = 452
GET_ENDPOINTS_REQUEST = 428
GET_ENDPOINTS_RESPONSE = 431

SECURITY_MODES = {1: "None", 2: "Sign", 3: "SignAndEncrypt"}
TOKEN_TYPES = {0: "Anonymous", 1: "UserName", 2: "Certificate", 3: "IssuedToken"}

BAD_TCP_ENDPOINT_URL_INVALID = 0x80830000


class Writer:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, v):
        self.buf += struct.pack("<B", v)
        return self

    def u32(self, v):
        self.buf += struct.pack("<I", v)
        return self

    def i32(self, v):
        self.buf += struct.pack("<i", v)
        return self

    def i64(self, v):
        self.buf += struct.pack("<q", v)
        return self

    def string(self, s: str | bytes | None):
        if s is None:
            return self.i32(-1)
        b = s.encode() if isinstance(s, str) else s
        self.i32(len(b))
        self.buf += b
        return self

    bytestring = string

    def strings(self, items):
        if items is None:
            return self.i32(-1)
        self.i32(len(items))
        for s in items:
            self.string(s)
        return self

    def nodeid(self, ident: int):
        if ident < 256:
            self.buf += bytes([0x00, ident])
        else:
            self.buf += bytes([0x01, 0x00]) + struct.pack("<H", ident)
        return self

    def localized_text(self, text: str | None):
        if text is None:
            return self.u8(0)
        self.u8(0x02)
        return self.string(text)

    def null_extension_object(self):
        self.nodeid(0)
        return self.u8(0)

    def bytes(self) -> bytes:
        return bytes(self.buf)


class Reader:
    def __init__(self, data: bytes, off: int = 0):
        self.data = data
        self.off = off

    def _take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise ProtocolError("truncated OPC UA message")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def u8(self):
        return self._take(1)[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def i32(self):
        return struct.unpack("<i", self._take(4))[0]

    def i64(self):
        return struct.unpack("<q", self._take(8))[0]

    def string(self) -> str | None:
        n = self.i32()
        if n == -1:
            return None
        return self._take(n).decode(errors="replace")

    def bytestring(self) -> bytes | None:
        n = self.i32()
        if n == -1:
            return None
        return self._take(n)

    def strings(self) -> list[str] | None:
        n = self.i32()
        if n == -1:
            return None
        return [self.string() for _ in range(n)]

    def nodeid(self) -> int:
        kind = self.u8()
        if kind == 0x00:
            return self.u8()
        if kind == 0x01:
            self.u8()
            return struct.unpack("<H", self._take(2))[0]
        if kind == 0x02:
            struct.unpack("<H", self._take(2))
            return self.u32()
        raise ProtocolError(f"unsupported NodeId encoding {kind:#x}")

    def localized_text(self) -> str | None:
        mask = self.u8()
        text = None
        if mask & 0x01:
            self.string()
        if mask & 0x02:
            text = self.string()
        return text

    def extension_object(self) -> None:
        self.nodeid()
        enc = self.u8()
        if enc == 0x01:
            self.bytestring()
        elif enc != 0x00:
            raise ProtocolError("unsupported ExtensionObject body")

    def diagnostic_info(self) -> None:
        mask = self.u8()
        if mask & 0x01:
            self.i32()
        if mask & 0x02:
            self.i32()
        if mask & 0x04:
            self.i32()
        if mask & 0x08:
            self.i32()
        if mask & 0x10:
            self.string()
        if mask & 0x20:
            self.u32()
        if mask & 0x40:
            self.diagnostic_info()


def frame(msg_type: bytes, body: bytes, chunk: bytes = b"F") -> bytes:
    return msg_type + chunk + struct.pack("<I", len(body) + 8) + body


def split_messages(buf: bytes) -> tuple[list[tuple[bytes, bytes]], bytes]:
    out, off = [], 0
    while len(buf) - off >= 8:
        msg_type = buf[off:off + 3]
        (size,) = struct.unpack_from("<I", buf, off + 4)
        if size < 8 or size > 1 << 24:
            raise ProtocolError("implausible OPC UA message size")
        if off + size > len(buf):
            break
        out.append((msg_type, buf[off + 8:off + size]))
        off += size
    return out, buf[off:]


@dataclass
class Hello:
    protocol_version: int = 0
    receive_buffer_size: int = 65535
    send_buffer_size: int = 65535
    max_message_size: int = 0
    max_chunk_count: int = 0
    endpoint_url: str = ""


def encode_hello(h: Hello) -> bytes:
    w = (Writer().u32(h.protocol_version).u32(h.receive_buffer_size).u32(h.send_buffer_size)
         .u32(h.max_message_size).u32(h.max_chunk_count).string(h.endpoint_url))
    return frame(b"HEL", w.bytes())


def decode_hello(body: bytes) -> Hello:
    r = Reader(body)
    return Hello(r.u32(), r.u32(), r.u32(), r.u32(), r.u32(), r.string() or "")


@dataclass
class Acknowledge:
    protocol_version: int = 0
    receive_buffer_size: int = 65535
    send_buffer_size: int = 65535
    max_message_size: int = 0
    max_chunk_count: int = 0


def encode_ack(a: Acknowledge) -> bytes:
    w = (Writer().u32(a.protocol_version).u32(a.receive_buffer_size).u32(a.send_buffer_size)
         .u32(a.max_message_size).u32(a.max_chunk_count))
    return frame(b"ACK", w.bytes())


def decode_ack(body: bytes) -> Acknowledge:
    r = Reader(body)
    return Acknowledge(r.u32(), r.u32(), r.u32(), r.u32(), r.u32())


def encode_error(code: int, reason: str) -> bytes:
    return frame(b"ERR", Writer().u32(code).string(reason).bytes())


def decode_error(body: bytes) -> tuple[int, str | None]:
    r = Reader(body)
    return r.u32(), r.string()


def _request_header(w: Writer, handle: int, audit: str | None = None) -> None:
    # the audit entry id is free text; scanners put their contact details there
    w.nodeid(0).i64(0).u32(handle).u32(0).string(audit).u32(10000).null_extension_object()


def _response_header(w: Writer, handle: int, status: int = 0, timestamp: int = 0) -> None:
    w.i64(timestamp).u32(handle).u32(status).u8(0).i32(-1).null_extension_object()


def _read_request_header(r: Reader) -> tuple[int, str | None]:
    r.nodeid()
    r.i64()
    handle = r.u32()
    r.u32()
    audit = r.string()
    r.u32()
    r.extension_object()
    return handle, audit


def _read_response_header(r: Reader) -> tuple[int, int]:
    r.i64()
    handle = r.u32()
    status = r.u32()
    r.diagnostic_info()
    r.strings()
    r.extension_object()
    return handle, status


def encode_open_request(request_id: int = 1, handle: int = 1, lifetime_ms: int = 600000,
                        audit: str | None = None) -> bytes:
    w = Writer().u32(0)  # secure channel id, 0 for a new channel
    w.string(SECURITY_POLICY_NONE).bytestring(None).bytestring(None)
    w.u32(1).u32(request_id)  # sequence number, request id
    w.nodeid(OPEN_SECURE_CHANNEL_REQUEST)
    _request_header(w, handle, audit)
    w.u32(0).u32(0).u32(1).bytestring(b"").u32(lifetime_ms)
    return frame(b"OPN", w.bytes())


@dataclass
class OpenRequest:
    security_policy_uri: str | None
    request_id: int
    handle: int
    security_mode: int
    audit: str | None = None


def decode_open_request(body: bytes) -> OpenRequest:
    r = Reader(body)
    r.u32()
    policy = r.string()
    r.bytestring()
    r.bytestring()
    r.u32()
    request_id = r.u32()
    if r.nodeid() != OPEN_SECURE_CHANNEL_REQUEST:
        raise ProtocolError("expected OpenSecureChannelRequest")
    handle, audit = _read_request_header(r)
    r.u32()
    r.u32()
    mode = r.u32()
    return OpenRequest(policy, request_id, handle, mode, audit)


def encode_open_response(channel_id: int, token_id: int, request_id: int, handle: int) -> bytes:
    w = Writer().u32(channel_id)
    w.string(SECURITY_POLICY_NONE).bytestring(None).bytestring(None)
    w.u32(1).u32(request_id)
    w.nodeid(OPEN_SECURE_CHANNEL_RESPONSE)
    _response_header(w, handle)
    w.u32(0)  # server protocol version
    w.u32(channel_id).u32(token_id).i64(0).u32(600000)
    w.bytestring(b"")
    return frame(b"OPN", w.bytes())


def decode_open_response(body: bytes) -> tuple[int, int]:
    """Returns (secure channel id, token id)."""
    r = Reader(body)
    r.u32()
    r.string()
    r.bytestring()
    r.bytestring()
    r.u32()
    r.u32()
    if r.nodeid() != OPEN_SECURE_CHANNEL_RESPONSE:
        raise ProtocolError("expected OpenSecureChannelResponse")
    _, status = _read_response_header(r)
    if status & 0x80000000:
        raise ProtocolError(f"OpenSecureChannel failed with status {status:#010x}")
    r.u32()
    channel_id, token_id = r.u32(), r.u32()
    r.i64()
    r.u32()
    r.bytestring()
    return channel_id, token_id


def encode_get_endpoints(channel_id: int, token_id: int, endpoint_url: str, request_id: int = 2,
                         handle: int = 2, audit: str | None = None) -> bytes:
    w = Writer().u32(channel_id).u32(token_id).u32(2).u32(request_id)
    w.nodeid(GET_ENDPOINTS_REQUEST)
    _request_header(w, handle, audit)
    w.string(endpoint_url).strings([]).strings([])
    return frame(b"MSG", w.bytes())


def decode_get_endpoints(body: bytes) -> tuple[int, int, str | None]:
    """Returns (request id, request handle, endpoint url)."""
    r = Reader(body)
    r.u32()
    r.u32()
    r.u32()
    request_id = r.u32()
    if r.nodeid() != GET_ENDPOINTS_REQUEST:
        raise ProtocolError("expected GetEndpointsRequest")
    handle, _ = _read_request_header(r)
    return request_id, handle, r.string()


def encode_close_channel(channel_id: int, token_id: int, request_id: int = 3) -> bytes:
    w = Writer().u32(channel_id).u32(token_id).u32(3).u32(request_id)
    w.nodeid(CLOSE_SECURE_CHANNEL_REQUEST)
    _request_header(w, 3)
    return frame(b"CLO", w.bytes())


@dataclass
class UserTokenPolicy:
    policy_id: str
    token_type: int


@dataclass
class EndpointDescription:
    endpoint_url: str
    application_uri: str
    product_uri: str
    application_name: str
    security_mode: int = 1
    security_policy_uri: str = SECURITY_POLICY_NONE
    user_tokens: list[UserTokenPolicy] = field(default_factory=list)
    server_certificate: bytes | None = None
    security_level: int = 0

    def to_json(self) -> dict:
        return {
            "endpoint_url": self.endpoint_url,
            "application_uri": self.application_uri,
            "product_uri": self.product_uri,
            "application_name": self.application_name,
            "security_mode": SECURITY_MODES.get(self.security_mode, str(self.security_mode)),
            "security_policy": self.security_policy_uri.rsplit("#", 1)[-1],
            "user_tokens": [TOKEN_TYPES.get(t.token_type, str(t.token_type)) for t in self.user_tokens],
        }


def encode_get_endpoints_response(channel_id: int, token_id: int, request_id: int, handle: int,
                                  endpoints: list[EndpointDescription]) -> bytes:
    w = Writer().u32(channel_id).u32(token_id).u32(2).u32(request_id)
    w.nodeid(GET_ENDPOINTS_RESPONSE)
    _response_header(w, handle)
    w.i32(len(endpoints))
    for ep in endpoints:
        w.string(ep.endpoint_url)
        w.string(ep.application_uri).string(ep.product_uri).localized_text(ep.application_name)
        w.u32(0).string(None).string(None).strings([ep.endpoint_url])
        w.bytestring(ep.server_certificate)
        w.u32(ep.security_mode).string(ep.security_policy_uri)
        w.i32(len(ep.user_tokens))
        for tok in ep.user_tokens:
            w.string(tok.policy_id).u32(tok.token_type).string(None).string(None).string(None)
        w.string(TRANSPORT_BINARY).u8(ep.security_level)
    return frame(b"MSG", w.bytes())


def decode_get_endpoints_response(body: bytes) -> list[EndpointDescription]:
    r = Reader(body)
    r.u32()
    r.u32()
    r.u32()
    r.u32()
    if r.nodeid() != GET_ENDPOINTS_RESPONSE:
        raise ProtocolError("expected GetEndpointsResponse")
    _, status = _read_response_header(r)
    if status & 0x80000000:
        raise ProtocolError(f"GetEndpoints failed with status {status:#010x}")
    n = r.i32()
    if n < 0:
        return []
    out = []
    for _ in range(n):
        url = r.string() or ""
        app_uri, product_uri, name = r.string() or "", r.string() or "", r.localized_text() or ""
        r.u32()
        r.string()
        r.string()
        r.strings()
        cert = r.bytestring()
        mode = r.u32()
        policy = r.string() or ""
        tokens = []
        for _ in range(max(r.i32(), 0)):
            pid = r.string() or ""
            ttype = r.u32()
            r.string()
            r.string()
            r.string()
            tokens.append(UserTokenPolicy(pid, ttype))
        r.string()
        level = r.u8()
        out.append(EndpointDescription(url, app_uri, product_uri, name, mode, policy, tokens, cert, level))
    return out

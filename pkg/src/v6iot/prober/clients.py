"""Client side of the first application exchange for each protocol.

Each handshake returns ``(AppStatus, meta)``. A reply that parses as the
protocol's expected first response is Valid; bytes that do not parse are
Invalid; silence is Timeout. Meta carries what the server volunteered and
nothing about the address that was asked.
"""
from __future__ import annotations

import enum

from ..addresses import format_address
from ..model import Protocol
from .dispatch import Datagram, DispatchError, FaultyTransportError, PeerClosed, ProbeTimeout
from .outcome import AppStatus
from .protocols import amqp, coap, mqtt, opcua
from .protocols.common import NeedMore, ProtocolError
from .session import Session, SessionCapped, recv_until

ACCESS_LABELS = {0: "open", 4: "auth_required", 5: "auth_required"}


def _mqtt_client_id(contact: str) -> str:
    return f"v6iot-research {contact}"


def _parse_connack(buf: bytes):
    if buf and buf[0] >> 4 != mqtt.CONNACK:
        raise ProtocolError("first packet is not CONNACK")
    packets, _ = mqtt.split_packets(buf)
    if not packets:
        raise NeedMore
    _, flags, body = packets[0]
    return mqtt.decode_connack(flags, body)


def mqtt_handshake(session: Session, timeout_us: int, contact: str) -> tuple[AppStatus, dict]:
    session.send(mqtt.encode_connect(_mqtt_client_id(contact)))
    _, code = recv_until(session, _parse_connack, timeout_us)
    if code == 0:
        session.send(mqtt.encode_disconnect())
    return AppStatus.Valid, {"connack_code": code,
                             "access": ACCESS_LABELS.get(code, "refused")}


def _parse_amqp_start(buf: bytes):
    if len(buf) < 8 and b"AMQP".startswith(buf[:4]):
        raise NeedMore
    if buf.startswith(b"AMQP"):
        return buf[:8]
    if buf[0] != amqp.FRAME_METHOD:
        raise ProtocolError("expected a method frame")
    frames, _ = amqp.split_frames(buf)
    if not frames:
        raise NeedMore
    _, _, payload = frames[0]
    class_id, method_id, r = amqp.decode_method(payload)
    if (class_id, method_id) != (amqp.CONNECTION, amqp.START):
        raise ProtocolError("expected Connection.Start")
    return amqp.decode_start(r)


def _amqp_meta(start: amqp.ConnectionStart) -> dict:
    props = start.server_properties
    meta = {"version": f"{start.version_major}-{start.version_minor}",
            "mechanisms": list(start.mechanisms)}
    for key in ("product", "version", "platform", "cluster_name"):
        if isinstance(props.get(key), str):
            meta["server_" + key] = props[key]
    return meta


def amqp_handshake(session: Session, timeout_us: int, contact: str) -> tuple[AppStatus, dict]:
    session.send(amqp.PROTOCOL_HEADER)
    reply = recv_until(session, _parse_amqp_start, timeout_us)
    if isinstance(reply, bytes):
        # a broker answering with the header it does speak is still conformant
        return AppStatus.Valid, {"supported_header": reply.hex()}
    return AppStatus.Valid, _amqp_meta(reply)


def _parse_opcua(expected: tuple[bytes, ...]):
    def parse(buf: bytes):
        if len(buf) >= 3 and buf[:3] not in expected + (b"ERR",):
            raise ProtocolError(f"unexpected OPC UA message {buf[:3]!r}")
        msgs, _ = opcua.split_messages(buf)
        if not msgs:
            raise NeedMore
        return msgs[0]
    return parse


def opcua_handshake(session: Session, timeout_us: int, contact: str) -> tuple[AppStatus, dict]:
    url = f"opc.tcp://[{format_address(session.host)}]:{session.port}"
    session.send(opcua.encode_hello(opcua.Hello(endpoint_url=url)))
    kind, body = recv_until(session, _parse_opcua((b"ACK",)), timeout_us)
    if kind == b"ERR":
        code, reason = opcua.decode_error(body)
        return AppStatus.Valid, {"error": f"{code:#010x}", "reason": reason}
    ack = opcua.decode_ack(body)
    meta = {"protocol_version": ack.protocol_version}
    # the endpoints list is a bonus: a server that acknowledged is already valid
    try:
        session.send(opcua.encode_open_request(audit=contact))
        kind, body = recv_until(session, _parse_opcua((b"OPN",)), timeout_us)
        if kind == b"ERR":
            raise ProtocolError("secure channel refused")
        channel_id, token_id = opcua.decode_open_response(body)
        session.send(opcua.encode_get_endpoints(channel_id, token_id, url, audit=contact))
        kind, body = recv_until(session, _parse_opcua((b"MSG",)), timeout_us)
        if kind == b"ERR":
            raise ProtocolError("GetEndpoints refused")
        endpoints = opcua.decode_get_endpoints_response(body)
        session.send(opcua.encode_close_channel(channel_id, token_id))
        meta["endpoints"] = [ep.to_json() for ep in endpoints]
    except (ProtocolError, DispatchError) as exc:
        meta["endpoints_error"] = type(exc).__name__
    return AppStatus.Valid, meta


def _coap_ids(session: Session) -> tuple[int, bytes]:
    # deterministic per target, unpredictable enough for matching replies
    mid = (session.host ^ session.port) & 0xFFFF
    return mid, ((session.host >> 16) & 0xFFFFFFFF).to_bytes(4, "big")


def coap_handshake(session: Session, timeout_us: int, contact: str) -> tuple[AppStatus, dict]:
    mid, token = _coap_ids(session)
    session.send(coap.encode(coap.well_known_core_request(mid, token)))
    deadline = session.now + timeout_us
    while True:
        left = deadline - session.now
        if left <= 0:
            raise ProbeTimeout("application timeout")
        data = session.recv(left)
        if isinstance(data, Datagram):
            if not data.consistent:
                raise FaultyTransportError("inconsistent UDP length")
            data = data.payload
        msg = coap.decode(data)
        if msg.mtype == coap.RST:
            raise ProtocolError("reset")
        if msg.mtype == coap.ACK and msg.code == 0 and msg.message_id == mid:
            continue  # empty ACK, separate response follows
        if msg.token != token:
            continue
        if msg.mtype == coap.CON:
            session.send(coap.encode(coap.Message(coap.ACK, 0, msg.message_id)))
        meta = {"code": coap.code_text(msg.code)}
        if msg.code == coap.CONTENT:
            meta["resources"] = coap.parse_link_format(msg.payload)
        return AppStatus.Valid, meta


HANDSHAKES = {
    Protocol.MQTT: mqtt_handshake,
    Protocol.AMQP: amqp_handshake,
    Protocol.OPCUA: opcua_handshake,
    Protocol.COAP: coap_handshake,
}


def app_handshake(session: Session, protocol: Protocol, timeout_us: int,
                  contact: str) -> tuple[AppStatus, dict]:
    """Run the protocol's first exchange; never raises for peer misbehaviour."""
    try:
        return HANDSHAKES[protocol](session, timeout_us, contact)
    except ProbeTimeout:
        return AppStatus.Timeout, {}
    except (ProtocolError, PeerClosed, ValueError):
        return AppStatus.Invalid, {}


class Access(str, enum.Enum):
    AnonymousAllowed = "AnonymousAllowed"
    AuthRequired = "AuthRequired"
    Indeterminate = "Indeterminate"


def mqtt_access(session: Session, timeout_us: int, contact: str,
                observe_us: int) -> tuple[Access, dict]:
    """Credential-free CONNECT; if accepted, count topics seen on '#' for a while.

    Only topic names are counted; payloads are dropped as they arrive.
    """
    session.send(mqtt.encode_connect(_mqtt_client_id(contact)))
    flags_code = recv_until(session, _parse_connack, timeout_us)
    code = flags_code[1]
    if code in (4, 5):
        return Access.AuthRequired, {"connack_code": code}
    if code != 0:
        return Access.Indeterminate, {"connack_code": code}
    session.send(mqtt.encode_subscribe(1, [("#", 0)]))
    topics: set[str] = set()
    buf = b""
    deadline = session.now + observe_us
    capped = False
    while session.now < deadline:
        try:
            buf += session.recv(deadline - session.now)
        except ProbeTimeout:
            break
        except SessionCapped:
            capped = True
            break
        packets, buf = mqtt.split_packets(buf)
        for ptype, flags, body in packets:
            if ptype == mqtt.PUBLISH:
                topic, _ = mqtt.decode_publish(flags, body)
                topics.add(topic)
    if not session.closed:
        session.send(mqtt.encode_disconnect())
    return Access.AnonymousAllowed, {"connack_code": 0, "topic_count": len(topics),
                                     "session_capped": capped}


def _parse_amqp_reply(buf: bytes):
    frames, _ = amqp.split_frames(buf)
    if not frames:
        raise NeedMore
    class_id, method_id, r = amqp.decode_method(frames[0][2])
    return class_id, method_id, r


def amqp_access(session: Session, timeout_us: int, contact: str) -> tuple[Access, dict]:
    """ANONYMOUS if offered, otherwise PLAIN with the stock guest account."""
    session.send(amqp.PROTOCOL_HEADER)
    start = recv_until(session, _parse_amqp_start, timeout_us)
    if isinstance(start, bytes):
        return Access.Indeterminate, {"supported_header": start.hex()}
    mechs = start.mechanisms
    props = {"product": "v6iot", "information": contact}
    if "ANONYMOUS" in mechs:
        mech, response = "ANONYMOUS", b""
    elif "PLAIN" in mechs:
        mech, response = "PLAIN", amqp.plain_response("guest", "guest")
    else:
        return Access.AuthRequired, {"mechanisms": list(mechs)}
    session.send(amqp.encode_start_ok(props, mech, response))
    class_id, method_id, r = recv_until(session, _parse_amqp_reply, timeout_us)
    evidence = {"mechanisms": list(mechs), "mechanism": mech}
    if (class_id, method_id) == (amqp.CONNECTION, amqp.TUNE):
        session.send(amqp.encode_close(200, "scan complete"))
        return Access.AnonymousAllowed, evidence
    if (class_id, method_id) == (amqp.CONNECTION, amqp.CLOSE):
        code, text = amqp.decode_close(r)
        evidence["close_code"] = code
        if code == amqp.ACCESS_REFUSED:
            return Access.AuthRequired, evidence
    return Access.Indeterminate, evidence

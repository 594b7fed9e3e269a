"""In-process responders and the simulated dispatcher.

Each planted port gets a fresh server object per connection. Servers turn
request bytes into an iterable of ``(delay_us, bytes)`` replies; the channel
plays those out against the prober's timeouts and reports the simulated time
consumed. Nothing a server sends depends on the address that was asked, so
every address of an aliased prefix answers byte-for-byte the same.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from ..model import Protocol, Transport, specs_for
from ..prober.dispatch import (UDP_HEADER_LEN, ConnectionRefused, Datagram, FaultyTransportError, PeerClosed,
                               ProbeTimeout)
from ..prober.protocols import amqp, coap, mqtt, opcua
from ..prober.protocols.common import ProtocolError
from ..prober.tls import ClientHello, TlsHandshakeError, TlsParams, TlsServerConfig
from .universe import Plant, PortRole, Universe

Replies = Iterable[tuple[int, bytes]]

TLS_ALERT = b"\x15\x03\x03\x00\x02\x02\x0a"  # fatal unexpected_message
HTTP_400 = (b"HTTP/1.1 400 Bad Request\r\nServer: nginx/1.22.1\r\nContent-Type: text/html\r\n"
            b"Content-Length: 0\r\nConnection: close\r\n\r\n")


class Server:
    """Per-connection protocol state. ``closed`` is set once the server hangs up."""

    closed = False

    def on_data(self, data: bytes) -> Replies:
        raise NotImplementedError


class WebServer(Server):
    def on_data(self, data: bytes) -> Replies:
        self.closed = True
        return [(0, HTTP_400)]


class MqttBroker(Server):
    def __init__(self, plant: Plant, flood_bytes: int = 0, trickle_us: int = 0):
        self.plant = plant
        self.buf = b""
        self.accepted = False
        self.flood_bytes = flood_bytes
        self.trickle_us = trickle_us

    def topics(self) -> list[str]:
        n = 3 + self.plant.index % 5
        return [f"site/{self.plant.index % 7}/sensor/{i}" for i in range(n)]

    def _subscription(self) -> Iterator[tuple[int, bytes]]:
        for topic in self.topics():
            yield 0, mqtt.encode_publish(topic, b"21.5", retain=True)
        if self.flood_bytes:
            chunk = mqtt.encode_publish("bulk/stream", b"\x00" * (1 << 20))
            for _ in range(-(-self.flood_bytes // len(chunk))):
                yield 0, chunk
        if self.trickle_us:
            for i in itertools.count():
                yield self.trickle_us, mqtt.encode_publish(f"tick/{i % 100}", b"1")

    def on_data(self, data: bytes) -> Replies:
        self.buf += data
        try:
            packets, self.buf = mqtt.split_packets(self.buf)
        except ProtocolError:
            self.closed = True
            return []
        out: list = []
        for ptype, flags, body in packets:
            if ptype == mqtt.CONNECT and not self.accepted:
                try:
                    mqtt.decode_connect(body)
                except ProtocolError:
                    self.closed = True
                    return out
                code = 0 if self.plant.anonymous else 5
                out.append((0, mqtt.encode_connack(code)))
                if code:
                    self.closed = True
                    return out
                self.accepted = True
            elif ptype == mqtt.SUBSCRIBE and self.accepted:
                pid, topics = mqtt.decode_subscribe(body)
                out.append((0, mqtt.encode_suback(pid, [0] * len(topics))))
                return itertools.chain(out, self._subscription())
            elif ptype == mqtt.DISCONNECT:
                self.closed = True
                return out
            else:
                # anything else before CONNECT is a protocol violation
                if not self.accepted:
                    self.closed = True
                    return out
        return out


AMQP_VERSIONS = ("3.8.9", "3.9.13", "3.11.18", "3.12.2")


class AmqpBroker(Server):
    def __init__(self, plant: Plant):
        self.plant = plant
        self.buf = b""
        self.started = False

    def mechanisms(self) -> list[str]:
        if self.plant.anonymous:
            return ["ANONYMOUS", "PLAIN"]
        if self.plant.amqp_external_only:
            return ["EXTERNAL"]
        return ["AMQPLAIN", "PLAIN"]

    def on_data(self, data: bytes) -> Replies:
        self.buf += data
        if not self.started:
            if len(self.buf) < 8:
                if amqp.PROTOCOL_HEADER.startswith(self.buf):
                    return []
            if not self.buf.startswith(amqp.PROTOCOL_HEADER):
                self.closed = True
                return [(0, amqp.PROTOCOL_HEADER)]
            self.buf = self.buf[8:]
            self.started = True
            props = {"product": "RabbitMQ",
                     "version": AMQP_VERSIONS[self.plant.index % len(AMQP_VERSIONS)],
                     "platform": "Erlang/OTP 25.3",
                     "capabilities": {"publisher_confirms": True, "authentication_failure_close": True}}
            start = amqp.ConnectionStart(0, 9, props, self.mechanisms(), ["en_US"])
            return [(0, amqp.encode_start(start))]
        try:
            frames, self.buf = amqp.split_frames(self.buf)
        except ProtocolError:
            self.closed = True
            return []
        for _, _, payload in frames:
            class_id, method_id, r = amqp.decode_method(payload)
            if (class_id, method_id) == (amqp.CONNECTION, amqp.START_OK):
                _, mech, response, _ = amqp.decode_start_ok(r)
                if mech not in self.mechanisms():
                    self.closed = True
                    return [(0, amqp.encode_close(530, "NOT_ALLOWED - unsupported mechanism"))]
                if self.plant.anonymous:
                    return [(0, amqp.encode_tune())]
                self.closed = True
                return [(0, amqp.encode_close(amqp.ACCESS_REFUSED,
                                              "ACCESS_REFUSED - Login was refused using authentication "
                                              f"mechanism {mech}", amqp.CONNECTION, amqp.START_OK))]
            if (class_id, method_id) == (amqp.CONNECTION, amqp.CLOSE):
                self.closed = True
                return [(0, amqp.encode_method(0, amqp.CONNECTION, amqp.CLOSE_OK, b""))]
        return []


class OpcuaServer(Server):
    def __init__(self, plant: Plant, port: int, secure: bool):
        self.plant = plant
        self.port = port
        self.secure = secure
        self.buf = b""
        self.hello = False

    def endpoints(self) -> list[opcua.EndpointDescription]:
        host = f"plc-{self.plant.index:05d}.iot.example"
        tokens = [opcua.UserTokenPolicy("anonymous", 0), opcua.UserTokenPolicy("username", 1)]
        return [opcua.EndpointDescription(
            endpoint_url=f"opc.tcp://{host}:{self.port}",
            application_uri=f"urn:{host}:server",
            product_uri="urn:open62541.server.application",
            application_name=f"PLC {self.plant.index}",
            security_mode=1,
            user_tokens=tokens,
        )]

    def on_data(self, data: bytes) -> Replies:
        self.buf += data
        if len(self.buf) >= 3 and self.buf[:3] not in (b"HEL", b"OPN", b"MSG", b"CLO"):
            self.closed = True
            return [(0, opcua.encode_error(0x80570000, "BadTcpMessageTypeInvalid"))]
        try:
            msgs, self.buf = opcua.split_messages(self.buf)
        except ProtocolError:
            self.closed = True
            return []
        out = []
        for kind, body in msgs:
            try:
                if kind == b"HEL":
                    opcua.decode_hello(body)
                    self.hello = True
                    out.append((0, opcua.encode_ack(opcua.Acknowledge())))
                elif kind == b"OPN" and self.hello:
                    req = opcua.decode_open_request(body)
                    out.append((0, opcua.encode_open_response(7, 1, req.request_id, req.handle)))
                elif kind == b"MSG" and self.hello:
                    request_id, handle, _ = opcua.decode_get_endpoints(body)
                    out.append((0, opcua.encode_get_endpoints_response(7, 1, request_id, handle, self.endpoints())))
                elif kind == b"CLO":
                    self.closed = True
                else:
                    self.closed = True
                    out.append((0, opcua.encode_error(0x80570000, "BadTcpMessageTypeInvalid")))
            except ProtocolError:
                self.closed = True
                out.append((0, opcua.encode_error(0x80020000, "BadDecodingError")))
            if self.closed:
                break
        return out


class CoapServer(Server):
    def __init__(self, plant: Plant):
        self.plant = plant

    def resources(self) -> bytes:
        links = ['</.well-known/core>;ct=40', '</sensors/temp>;rt="temperature-c";if="sensor"',
                 f'</actuators/relay{self.plant.index % 4}>;rt="switch"']
        return ",".join(links).encode()

    def on_data(self, data: bytes) -> Replies:
        try:
            msg = coap.decode(data)
        except ProtocolError:
            return []  # unparseable datagrams are dropped silently
        if msg.mtype not in (coap.CON, coap.NON) or msg.code != coap.GET:
            return [(0, coap.encode(coap.Message(coap.RST, 0, msg.message_id)))]
        mtype = coap.ACK if msg.mtype == coap.CON else coap.NON
        if msg.uri_path() == "/.well-known/core":
            reply = coap.Message(mtype, coap.CONTENT, msg.message_id, msg.token,
                                 [(coap.CONTENT_FORMAT, bytes([coap.LINK_FORMAT]))], self.resources())
        else:
            reply = coap.Message(mtype, coap.NOT_FOUND, msg.message_id, msg.token)
        return [(0, coap.encode(reply))]


@dataclass
class Endpoint:
    """What listens on one (plant, port)."""

    plant: Plant
    port: int
    role: PortRole
    transport: Transport

    @property
    def tls(self) -> TlsServerConfig | None:
        if self.role in (PortRole.tls_app, PortRole.tls_web):
            return self.plant.tls_config
        return None

    def server(self) -> Server:
        if self.role in (PortRole.web, PortRole.tls_web):
            return WebServer()
        proto = self.plant.protocol
        if proto is Protocol.MQTT:
            return MqttBroker(self.plant)
        if proto is Protocol.AMQP:
            return AmqpBroker(self.plant)
        if proto is Protocol.OPCUA:
            return OpcuaServer(self.plant, self.port, self.tls is not None)
        return CoapServer(self.plant)


def find_endpoint(universe: Universe, addr: int, port: int, transport: Transport) -> Endpoint | str | None:
    """Endpoint, ``"closed"`` for a live host without that service, ``None`` for silence."""
    plant = universe.lookup(addr)
    if plant is None:
        return None
    for spec, role in zip(specs_for(plant.protocol), plant.port_roles()):
        if spec.port == port and spec.transport is transport and role is not PortRole.closed:
            return Endpoint(plant, port, role, transport)
    return "closed"


class SimChannel:
    def __init__(self, endpoint: Endpoint | str | None, transport: Transport, rtt_us: int,
                 server_factory=None, elapsed_us: int = 0):
        self.endpoint = endpoint
        self.transport = transport
        self.rtt_us = rtt_us
        self.elapsed_us = elapsed_us
        self.server = None
        if isinstance(endpoint, Endpoint):
            self.server = (server_factory or Endpoint.server)(endpoint)
        self.tls_active = False
        self.queue: deque = deque()
        self.head: list | None = None  # [remaining delay, data]
        self.peer_closed = False
        self.closed = False
        self.sent: list[bytes] = []

    @property
    def _garbage(self) -> bool:
        return isinstance(self.endpoint, Endpoint) and self.endpoint.role is PortRole.garbage

    def _wire(self, data: bytes) -> bytes | Datagram:
        if self.transport is Transport.DatagramUDP:
            length = len(data) + UDP_HEADER_LEN
            if self._garbage:
                length += 13  # header claims more than arrived
            return Datagram(length, data)
        return data

    def send(self, data: bytes) -> None:
        if self.closed:
            raise PeerClosed("send on closed channel")
        self.sent.append(data)
        ep = self.endpoint
        if not isinstance(ep, Endpoint) or self.peer_closed:
            return
        if self._garbage:
            self.queue.append(iter([(self.rtt_us, b"\x00\x17\xff\xfe")]))
            return
        if ep.tls is not None and not self.tls_active:
            # a (D)TLS endpoint seeing cleartext: TLS stacks alert, DTLS drops
            if self.transport is Transport.StreamTCP:
                self.queue.append(iter([(self.rtt_us, TLS_ALERT)]))
                self.peer_closed = True
            return
        replies = iter(self.server.on_data(data))
        first = next(replies, None)
        if first is not None:
            self.queue.append(itertools.chain([(first[0] + self.rtt_us, first[1])], replies))
        if self.server.closed and first is None:
            self.peer_closed = True

    def _next(self) -> list | None:
        while self.head is None and self.queue:
            item = next(self.queue[0], None)
            if item is None:
                self.queue.popleft()
                continue
            self.head = [item[0], item[1]]
        return self.head

    def recv(self, timeout_us: int) -> bytes | Datagram:
        if self.closed:
            raise PeerClosed("recv on closed channel")
        head = self._next()
        if head is None:
            if self.server is not None and self.server.closed:
                self.peer_closed = True
            if self.peer_closed and self.transport is Transport.StreamTCP:
                raise PeerClosed("connection closed by peer")
            if self.endpoint == "closed" and self.transport is Transport.DatagramUDP and self.sent:
                self.elapsed_us += self.rtt_us
                raise ConnectionRefused("port unreachable")
            self.elapsed_us += timeout_us
            raise ProbeTimeout("no reply")
        delay, data = head
        if delay > timeout_us:
            head[0] -= timeout_us
            self.elapsed_us += timeout_us
            raise ProbeTimeout("no reply yet")
        self.elapsed_us += delay
        self.head = None
        return self._wire(data)

    def start_tls(self, hello: ClientHello, timeout_us: int) -> TlsParams:
        ep = self.endpoint
        if not isinstance(ep, Endpoint):
            if ep == "closed" and self.transport is Transport.DatagramUDP:
                self.elapsed_us += self.rtt_us
                raise ConnectionRefused("port unreachable")
            self.elapsed_us += timeout_us
            raise ProbeTimeout("no handshake reply")
        if self._garbage:
            self.elapsed_us += self.rtt_us
            raise FaultyTransportError("malformed reply to ClientHello")
        cfg = ep.tls
        if cfg is None:
            if self.transport is Transport.DatagramUDP:
                # cleartext CoAP ignores a record it cannot parse
                self.elapsed_us += timeout_us
                raise ProbeTimeout("no handshake reply")
            self.elapsed_us += self.rtt_us
            self.peer_closed = True
            raise TlsHandshakeError("peer does not speak TLS")
        try:
            params = cfg.negotiate(hello)
        except TlsHandshakeError:
            self.elapsed_us += self.rtt_us
            self.peer_closed = True
            raise
        self.elapsed_us += self.rtt_us * (1 if params.version == "TLS1.3" else 2)
        self.tls_active = True
        return params

    def close(self) -> None:
        self.closed = True


class SimDispatcher:
    """Dispatcher over a :class:`Universe`; reentrant, no clock of its own."""

    def __init__(self, universe: Universe, rtt_us: int | None = None, server_factory=None):
        self.universe = universe
        self.rtt_us = universe.spec.rtt_us if rtt_us is None else rtt_us
        self.server_factory = server_factory
        self.connects = 0

    def connect(self, addr: int, port: int, transport: Transport, timeout_us: int) -> SimChannel:
        self.connects += 1
        ep = find_endpoint(self.universe, addr, port, transport)
        if transport is Transport.DatagramUDP:
            return SimChannel(ep, transport, self.rtt_us, self.server_factory)
        if ep is None:
            raise ProbeTimeout("no SYN-ACK", timeout_us)
        if ep == "closed":
            raise ConnectionRefused("RST", self.rtt_us)
        if ep.role is PortRole.garbage:
            raise FaultyTransportError("malformed SYN-ACK", self.rtt_us)
        return SimChannel(ep, transport, self.rtt_us, self.server_factory, elapsed_us=self.rtt_us)


@dataclass(frozen=True)
class SimResponse:
    kind: str  # "data", "timeout", "refused", "faulty", "closed"
    data: bytes
    length_field: int | None
    elapsed_us: int


def dispatch_probe(universe: Universe, addr: int, port: int, transport: Transport, payload: bytes,
                   hello: ClientHello | None = None, timeout_us: int = 5_000_000) -> SimResponse:
    """One request, every reply byte until the peer goes quiet. Used to compare scripted responses."""
    disp = SimDispatcher(universe)
    try:
        ch = disp.connect(addr, port, transport, timeout_us)
    except ProbeTimeout as exc:
        return SimResponse("timeout", b"", None, exc.elapsed_us)
    except ConnectionRefused as exc:
        return SimResponse("refused", b"", None, exc.elapsed_us)
    except FaultyTransportError as exc:
        return SimResponse("faulty", b"", None, exc.elapsed_us)
    if hello is not None:
        try:
            ch.start_tls(hello, timeout_us)
        except TlsHandshakeError:
            return SimResponse("closed", b"", None, ch.elapsed_us)
        except ProbeTimeout:
            return SimResponse("timeout", b"", None, ch.elapsed_us)
        except (ConnectionRefused, FaultyTransportError) as exc:
            kind = "refused" if isinstance(exc, ConnectionRefused) else "faulty"
            return SimResponse(kind, b"", None, ch.elapsed_us)
    ch.send(payload)
    data, length = b"", None
    while True:
        try:
            chunk = ch.recv(timeout_us)
        except ProbeTimeout:
            break
        except PeerClosed:
            break
        except ConnectionRefused:
            return SimResponse("refused", b"", None, ch.elapsed_us)
        if isinstance(chunk, Datagram):
            length = chunk.length_field if length is None else length
            chunk = chunk.payload
        data += chunk
        if transport is Transport.DatagramUDP:
            break
    kind = "data" if data else "timeout"
    return SimResponse(kind, data, length, ch.elapsed_us)

"""One handshake's worth of traffic to one host, on the prober's clock."""
from __future__ import annotations

from ..model import Transport
from .dispatch import Datagram, Dispatcher, PeerClosed, ProbeTimeout
from .policy import HandshakeEvent, Politeness
from .tls import ClientHello, TlsParams

SEGMENT = 1440


class SessionCapped(PeerClosed):
    """The session hit its duration or traffic cap and was closed by us."""


class Session:
    """Wraps a dispatcher channel.

    Every outgoing packet takes a pacer slot, time spent waiting on the peer
    is read back from the channel, and closing the session logs a
    :class:`HandshakeEvent` and releases the host to the politeness arbiter.
    """

    def __init__(self, dispatcher: Dispatcher, politeness: Politeness, host: int, port: int,
                 transport: Transport, purpose: str, start_us: int,
                 max_duration_us: int | None = None, max_bytes: int | None = None):
        self.dispatcher = dispatcher
        self.politeness = politeness
        self.host, self.port, self.transport, self.purpose = host, port, transport, purpose
        self.now = start_us
        self.start_us = None
        self.packet_times: list[int] = []
        self.bytes_sent = 0
        self.bytes_received = 0
        self.max_duration_us = max_duration_us
        self.max_bytes = max_bytes
        self.channel = None
        self.closed = False
        self.capped = False
        politeness.begin(host)

    @property
    def bytes_exchanged(self) -> int:
        return self.bytes_sent + self.bytes_received

    def _packet(self) -> None:
        self.now = self.politeness.send_slot(self.now)
        if self.start_us is None:
            self.start_us = self.now
        self.packet_times.append(self.now)

    def _elapsed(self, before: int) -> None:
        self.now += self.channel.elapsed_us - before

    def connect(self, timeout_us: int) -> None:
        stream = self.transport is Transport.StreamTCP
        if stream:
            self._packet()  # SYN
        elif self.start_us is None:
            self.start_us = self.now
        try:
            self.channel = self.dispatcher.connect(self.host, self.port, self.transport, timeout_us)
        except Exception as exc:
            self.now += getattr(exc, "elapsed_us", 0)
            raise
        self.now += self.channel.elapsed_us
        if stream:
            self._packet()  # ACK

    def send(self, data: bytes) -> None:
        for _ in range(max(1, -(-len(data) // SEGMENT))):
            self._packet()
        self.channel.send(data)
        self.bytes_sent += len(data)

    def _budget(self, timeout_us: int) -> int:
        if self.max_duration_us is not None and self.start_us is not None:
            left = self.start_us + self.max_duration_us - self.now
            if left <= 0:
                self.capped = True
                self.close()
                raise SessionCapped("duration cap")
            return min(timeout_us, left)
        return timeout_us

    def recv(self, timeout_us: int) -> bytes | Datagram:
        if self.max_bytes is not None and self.bytes_exchanged >= self.max_bytes:
            self.capped = True
            self.close()
            raise SessionCapped("traffic cap")
        budget = self._budget(timeout_us)
        before = self.channel.elapsed_us
        try:
            data = self.channel.recv(budget)
        except ProbeTimeout:
            self._elapsed(before)
            if budget < timeout_us:
                # the wait was cut short by the duration cap, not by the peer
                self.capped = True
                self.close()
                raise SessionCapped("duration cap") from None
            raise
        except BaseException:
            self._elapsed(before)
            raise
        self._elapsed(before)
        payload = data.payload if isinstance(data, Datagram) else data
        self.bytes_received += len(payload)
        if self.max_bytes is not None and self.bytes_exchanged > self.max_bytes:
            # anything past the cap is discarded and the connection torn down
            self.bytes_received -= self.bytes_exchanged - self.max_bytes
            self.capped = True
            self.close()
            raise SessionCapped("traffic cap")
        return data

    def start_tls(self, hello: ClientHello, timeout_us: int) -> TlsParams:
        self._packet()  # ClientHello
        before = self.channel.elapsed_us
        try:
            params = self.channel.start_tls(hello, timeout_us)
        finally:
            self._elapsed(before)
        self._packet()  # key exchange / Finished
        return params

    def close(self) -> HandshakeEvent | None:
        if self.closed:
            return None
        self.closed = True
        if self.channel is not None:
            if self.transport is Transport.StreamTCP:
                self._packet()  # FIN
            self.channel.close()
        start = self.start_us if self.start_us is not None else self.now
        event = HandshakeEvent(self.host, self.port, self.purpose, start, self.now,
                               tuple(self.packet_times))
        self.politeness.end(self.host, self.now)
        self.event = event
        return event


def recv_until(session: Session, parse, timeout_us: int):
    """Accumulate stream bytes until ``parse(buf)`` stops raising NeedMore."""
    from .protocols.common import NeedMore

    deadline = session.now + timeout_us
    buf = b""
    while True:
        left = deadline - session.now
        if left <= 0:
            raise ProbeTimeout("application timeout")
        buf += session.recv(left)
        try:
            return parse(buf)
        except NeedMore:
            continue

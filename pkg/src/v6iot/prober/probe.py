"""The prober: transport probe, optional (D)TLS, first application exchange, fallback."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from ..model import Protocol, ProtocolSpec, Transport
from .clients import app_handshake
from .dispatch import ConnectionRefused, DispatchError, Dispatcher, FaultyTransportError
from .outcome import ProbeOutcome, TlsStatus, TransportStatus
from .policy import HandshakeEvent, Politeness, PolitenessPolicy, Scheduler, Task, TaskResult, schedule_batch
from .session import Session
from .tls import ClientHello, TlsHandshakeError, scan_hello


def transport_status(exc: BaseException) -> TransportStatus:
    """Map a dispatcher error to the transport field; network trouble never aborts a batch."""
    if isinstance(exc, ConnectionRefused):
        return TransportStatus.Refused
    if isinstance(exc, FaultyTransportError):
        return TransportStatus.FaultyTransport
    return TransportStatus.Timeout


@dataclass
class Prober:
    dispatcher: Dispatcher
    policy: PolitenessPolicy = field(default_factory=PolitenessPolicy)
    politeness: Politeness | None = None
    hello: ClientHello | None = None
    events: list[HandshakeEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.politeness is None:
            self.politeness = Politeness(self.policy)
        if self.hello is None:
            self.hello = scan_hello(f"CN=v6iot research scanner, URI={self.policy.contact}")

    # sessions -----------------------------------------------------------

    def open_session(self, addr: int, spec: ProtocolSpec, purpose: str, start_us: int) -> Session:
        capped = spec.protocol is Protocol.MQTT
        return Session(self.dispatcher, self.politeness, addr, spec.port, spec.transport, purpose, start_us,
                       self.policy.mqtt_session_max_us if capped else None,
                       self.policy.mqtt_traffic_max if capped else None)

    def finish(self, session: Session) -> int:
        event = session.close()
        if event is not None:
            self.events.append(event)
        return session.now

    # single attempts -----------------------------------------------------

    def transport_probe(self, session: Session) -> TransportStatus:
        """Stream: connection establishment. Datagram: nothing to do until a reply arrives."""
        try:
            session.connect(self.policy.transport_timeout_us)
        except DispatchError as exc:
            return transport_status(exc)
        return TransportStatus.Established

    def attempt(self, addr: int, spec: ProtocolSpec, start_us: int, use_tls: bool,
                purpose: str = "validate", hello: ClientHello | None = None) -> tuple[ProbeOutcome, int]:
        """One connection: transport, then (D)TLS if asked, then the app exchange.

        Returns the outcome and the time the session closed.
        """
        session = self.open_session(addr, spec, purpose, start_us)
        try:
            outcome = self._attempt(session, addr, spec, use_tls, hello or self.hello)
        finally:
            end = self.finish(session)
        return outcome, end

    def _attempt(self, session: Session, addr: int, spec: ProtocolSpec, use_tls: bool,
                 hello: ClientHello) -> ProbeOutcome:
        datagram = spec.transport is Transport.DatagramUDP
        transport = self.transport_probe(session)
        ts = session.start_us if session.start_us is not None else session.now
        if transport is not TransportStatus.Established:
            return ProbeOutcome(addr, spec, ts, transport, bytes_exchanged=session.bytes_exchanged)
        tls, params = TlsStatus.NotAttempted, None
        if use_tls:
            try:
                params = session.start_tls(hello, self.policy.transport_timeout_us)
                tls = TlsStatus.Completed
            except TlsHandshakeError:
                tls = TlsStatus.Failed
            except DispatchError as exc:
                status = transport_status(exc)
                if datagram or status is not TransportStatus.Timeout:
                    # no DTLS answer at all means the datagram transport never came up
                    return ProbeOutcome(addr, spec, ts, status, bytes_exchanged=session.bytes_exchanged)
                tls = TlsStatus.Failed
            if tls is TlsStatus.Failed:
                return ProbeOutcome(addr, spec, ts, TransportStatus.Established, tls,
                                    bytes_exchanged=session.bytes_exchanged)
        try:
            app, meta = app_handshake(session, spec.protocol, self.policy.app_timeout_us, self.policy.contact)
        except DispatchError as exc:
            return ProbeOutcome(addr, spec, ts, transport_status(exc), bytes_exchanged=session.bytes_exchanged)
        if datagram and not use_tls and session.bytes_received == 0:
            # plain UDP: silence means no transport, not an application timeout
            return ProbeOutcome(addr, spec, ts, TransportStatus.Timeout, bytes_exchanged=session.bytes_exchanged)
        return ProbeOutcome(addr, spec, ts, TransportStatus.Established, tls, params, app, meta,
                            session.bytes_exchanged)

    # tasks -----------------------------------------------------------------

    def probe_task(self, addr: int, spec: ProtocolSpec, sink: Callable[[ProbeOutcome], None],
                   purpose: str = "validate") -> Task:
        """Validation probe; a failed app attempt on a standard port queues one (D)TLS retry."""

        def first(start_us: int) -> TaskResult:
            outcome, end = self.attempt(addr, spec, start_us, use_tls=spec.secured, purpose=purpose)
            if spec.secured or not self.needs_fallback(outcome):
                sink(outcome)
                return TaskResult(end)

            def retry(start2: int) -> TaskResult:
                fb, end2 = self.attempt(addr, spec, start2, use_tls=True, purpose=purpose + "-tls-fallback")
                sink(outcome.with_fallback(fb))
                return TaskResult(end2)

            return TaskResult(end, [Task(addr, spec.port, purpose + "-tls-fallback", retry)])

        return Task(addr, spec.port, purpose, first)

    @staticmethod
    def needs_fallback(outcome: ProbeOutcome) -> bool:
        if outcome.transport is TransportStatus.Established:
            return not outcome.valid
        # DTLS servers drop plaintext datagrams, so UDP silence still earns one DTLS try
        return (outcome.spec.transport is Transport.DatagramUDP
                and outcome.transport is TransportStatus.Timeout)

    def run(self, tasks: Iterable[Task]) -> None:
        sched = Scheduler(self.politeness)
        sched.submit_all(tasks)
        sched.run()

    def probe_all(self, targets: Sequence[tuple[int, ProtocolSpec]], rng_seed=None,
                  purpose: str = "validate") -> list[ProbeOutcome]:
        """Probe every (address, spec) in a seeded random order; outcomes in completion order."""
        plan = schedule_batch(targets, self.policy, self.politeness.now_us, rng_seed)
        out: list[ProbeOutcome] = []
        self.run(self.probe_task(p.target[0], p.target[1], out.append, purpose) for p in plan)
        return out

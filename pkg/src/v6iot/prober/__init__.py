from .clients import Access, amqp_access, app_handshake, mqtt_access
from .dispatch import (ConnectionRefused, Datagram, DispatchError, Dispatcher, FaultyTransportError,
                       PeerClosed, ProbeTimeout, SocketDispatcher)
from .outcome import AppStatus, ProbeOutcome, TlsStatus, TransportStatus
from .policy import (EPOCH, AuditReport, HandshakeEvent, Pacer, PlannedProbe, Politeness, PolitenessPolicy,
                     Scheduler, Task, TaskResult, WallClock, audit, iso, peak_window_count, schedule_batch)
from .probe import Prober, transport_status
from .session import Session, SessionCapped
from .tls import CertSummary, ClientHello, TlsHandshakeError, TlsParams, TlsServerConfig

__all__ = [
    "Access", "AppStatus", "AuditReport", "CertSummary", "ClientHello", "ConnectionRefused", "Datagram",
    "DispatchError", "Dispatcher", "EPOCH", "FaultyTransportError", "HandshakeEvent", "Pacer", "PeerClosed",
    "PlannedProbe", "Politeness", "PolitenessPolicy", "ProbeOutcome", "ProbeTimeout", "Prober", "Scheduler",
    "Session", "SessionCapped", "SocketDispatcher", "Task", "TaskResult", "TlsHandshakeError", "TlsParams",
    "TlsServerConfig", "TlsStatus", "TransportStatus", "WallClock", "amqp_access", "app_handshake", "audit", "iso",
    "mqtt_access", "peak_window_count", "schedule_batch", "transport_status",
]

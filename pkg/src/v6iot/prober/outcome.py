"""ProbeOutcome: what one (address, port) attempt produced."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from ..addresses import format_address, parse_address
from ..model import ProtocolSpec
from .tls import TlsParams


class TransportStatus(str, enum.Enum):
    Established = "Established"
    Refused = "Refused"
    Timeout = "Timeout"
    FaultyTransport = "FaultyTransport"


class TlsStatus(str, enum.Enum):
    NotAttempted = "NotAttempted"
    Completed = "Completed"
    Failed = "Failed"


class AppStatus(str, enum.Enum):
    NotAttempted = "NotAttempted"
    Valid = "Valid"
    Invalid = "Invalid"
    Timeout = "Timeout"


@dataclass(frozen=True)
class ProbeOutcome:
    address: int
    spec: ProtocolSpec
    timestamp_us: int
    transport: TransportStatus
    tls: TlsStatus = TlsStatus.NotAttempted
    tls_params: TlsParams | None = None
    app: AppStatus = AppStatus.NotAttempted
    meta: dict = field(default_factory=dict)
    bytes_exchanged: int = 0
    tls_on_standard_port: bool = False

    def __post_init__(self):
        if self.app is not AppStatus.NotAttempted and self.transport is not TransportStatus.Established:
            raise ValueError("application result requires an established transport")
        if (self.tls_params is not None) != (self.tls is TlsStatus.Completed):
            raise ValueError("tls params present iff the handshake completed")

    @property
    def valid(self) -> bool:
        return self.app is AppStatus.Valid

    @property
    def valid_over_tls(self) -> bool:
        return self.valid and self.tls is TlsStatus.Completed

    def with_fallback(self, fallback: "ProbeOutcome") -> "ProbeOutcome":
        """Fold a TLS fallback attempt into this standard-port outcome."""
        total = self.bytes_exchanged + fallback.bytes_exchanged
        if fallback.tls is TlsStatus.Completed:
            return replace(fallback, tls_on_standard_port=True, bytes_exchanged=total,
                           timestamp_us=self.timestamp_us)
        if fallback.transport is not TransportStatus.Established or self.transport is not TransportStatus.Established:
            return replace(self, bytes_exchanged=total)
        # a failed handshake leaves the original result in place
        return replace(self, tls=TlsStatus.Failed, bytes_exchanged=total)

    def to_json(self) -> dict:
        from .policy import iso

        return {
            "address": format_address(self.address),
            "protocol": self.spec.protocol.value,
            "port": self.spec.port,
            "variant": self.spec.variant.value,
            "transport_kind": self.spec.transport.value,
            "timestamp": iso(self.timestamp_us),
            "transport": self.transport.value,
            "tls": self.tls.value,
            "tls_params": self.tls_params.to_json() if self.tls_params else None,
            "app": self.app.value,
            "meta": self.meta,
            "bytes_exchanged": self.bytes_exchanged,
            "tls_on_standard_port": self.tls_on_standard_port,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProbeOutcome":
        from .policy import EPOCH
        from datetime import datetime

        ts = datetime.fromisoformat(obj["timestamp"].rstrip("Z")).replace(tzinfo=EPOCH.tzinfo)
        delta = ts - EPOCH
        params = obj.get("tls_params")
        return cls(
            address=parse_address(obj["address"]),
            spec=ProtocolSpec.of(obj["protocol"], obj["port"]),
            timestamp_us=(delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds,
            transport=TransportStatus(obj["transport"]),
            tls=TlsStatus(obj["tls"]),
            tls_params=TlsParams.from_json(params) if params else None,
            app=AppStatus(obj["app"]),
            meta=obj.get("meta") or {},
            bytes_exchanged=obj.get("bytes_exchanged", 0),
            tls_on_standard_port=obj.get("tls_on_standard_port", False),
        )

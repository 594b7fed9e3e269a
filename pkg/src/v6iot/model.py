"""Shared vocabulary: origin tags and the protocol/port matrix."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


class SourceKind(str, enum.Enum):
    TUMHitlist = "TUMHitlist"
    TUMOpen = "TUMOpen"
    DNSZone = "DNSZone"
    DNSZoneWWW = "DNSZoneWWW"
    V4Derived = "V4Derived"
    Generator = "Generator"


@dataclass(frozen=True, order=True)
class SourceTag:
    kind: SourceKind
    generator_name: str | None = None
    generator_seed_source: SourceKind | None = None

    def __post_init__(self):
        if (self.kind is SourceKind.Generator) != (self.generator_name is not None):
            raise ValueError("generator_name must be set iff kind is Generator")
        if self.generator_seed_source is SourceKind.Generator:
            raise ValueError("generator seed source must be a seedlist kind")

    @classmethod
    def seed(cls, kind: SourceKind | str) -> "SourceTag":
        return cls(SourceKind(kind))

    @classmethod
    def generator(cls, name: str, seed_source: SourceKind | str | None = None) -> "SourceTag":
        return cls(SourceKind.Generator, name,
                   SourceKind(seed_source) if seed_source is not None else None)

    @property
    def is_generator(self) -> bool:
        return self.kind is SourceKind.Generator

    def __str__(self):
        if self.kind is SourceKind.Generator:
            src = self.generator_seed_source.value if self.generator_seed_source else "-"
            return f"Generator:{self.generator_name}@{src}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "SourceTag":
        if text.startswith("Generator:"):
            name, _, src = text[len("Generator:"):].rpartition("@")
            return cls.generator(name, None if src == "-" else src)
        return cls.seed(text)


class Protocol(str, enum.Enum):
    AMQP = "AMQP"
    MQTT = "MQTT"
    OPCUA = "OPCUA"
    COAP = "COAP"


class Variant(str, enum.Enum):
    Standard = "Standard"
    SecuredTransport = "SecuredTransport"


class Transport(str, enum.Enum):
    StreamTCP = "StreamTCP"
    DatagramUDP = "DatagramUDP"


# (standard port, secure port)
PORTS = {
    Protocol.AMQP: (5672, 5671),
    Protocol.MQTT: (1883, 8883),
    Protocol.OPCUA: (4840, 4843),
    Protocol.COAP: (5683, 5684),
}


@dataclass(frozen=True, order=True)
class ProtocolSpec:
    protocol: Protocol
    port: int
    variant: Variant
    transport: Transport

    def __post_init__(self):
        std, sec = PORTS[self.protocol]
        if self.port not in (std, sec):
            raise ValueError(f"port {self.port} is not a {self.protocol.value} port")
        expected = Variant.Standard if self.port == std else Variant.SecuredTransport
        if self.variant is not expected:
            raise ValueError(f"port {self.port} implies variant {expected.value}")
        want = Transport.DatagramUDP if self.protocol is Protocol.COAP else Transport.StreamTCP
        if self.transport is not want:
            raise ValueError(f"{self.protocol.value} runs over {want.value}")

    @classmethod
    def of(cls, protocol: Protocol | str, port: int | None = None, secure: bool = False) -> "ProtocolSpec":
        protocol = Protocol(protocol)
        std, sec = PORTS[protocol]
        if port is None:
            port = sec if secure else std
        variant = Variant.Standard if port == std else Variant.SecuredTransport
        transport = Transport.DatagramUDP if protocol is Protocol.COAP else Transport.StreamTCP
        return cls(protocol, port, variant, transport)

    @classmethod
    def parse(cls, text: str) -> "ProtocolSpec":
        """Accepts ``"MQTT:1883"`` or ``"MQTT"`` (standard port)."""
        name, _, port = text.partition(":")
        return cls.of(name.upper(), int(port) if port else None)

    @property
    def secured(self) -> bool:
        return self.variant is Variant.SecuredTransport

    @property
    def sibling(self) -> "ProtocolSpec":
        std, sec = PORTS[self.protocol]
        return ProtocolSpec.of(self.protocol, sec if self.port == std else std)

    def __str__(self):
        return f"{self.protocol.value}:{self.port}"


ALL_SPECS = tuple(ProtocolSpec.of(p, port) for p, ports in PORTS.items() for port in ports)


def specs_for(protocol: Protocol | str) -> tuple[ProtocolSpec, ProtocolSpec]:
    protocol = Protocol(protocol)
    std, sec = PORTS[protocol]
    return ProtocolSpec.of(protocol, std), ProtocolSpec.of(protocol, sec)


# funnel order; a host's class is the furthest step any of its ports reached
class HostClass(str, enum.Enum):
    NoResponse = "NoResponse"
    FilteredTransport = "FilteredTransport"
    TransportOnly = "TransportOnly"
    TlsNoApp = "TlsNoApp"
    ValidPlain = "ValidPlain"
    ValidTls = "ValidTls"

    @property
    def rank(self) -> int:
        return list(HostClass).index(self)


@dataclass
class ProvenancedAddress:
    address: int
    origins: set[SourceTag] = field(default_factory=set)
    aliased: bool = False

    def merge(self, other: "ProvenancedAddress") -> "ProvenancedAddress":
        if other.address != self.address:
            raise ValueError("cannot merge different addresses")
        return ProvenancedAddress(self.address, self.origins | other.origins,
                                  self.aliased or other.aliased)

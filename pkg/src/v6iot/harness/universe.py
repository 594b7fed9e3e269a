"""Synthetic IPv6 universe: clustered plants with scripted behaviors and a ground truth."""
from __future__ import annotations

import enum
import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Iterable

from ..addresses import Prefix, format_address, parse_address
from ..blockdedup import PrefixTree
from ..io import read_json, write_jsonl
from ..model import HostClass, Protocol, specs_for
from ..prober.tls import MODERN_SUITES, TLS13_SUITES, WEAK_SUITES, CertSummary, TlsServerConfig
from ..seeds import MockResolver


class DuplicatePlantedAddress(ValueError):
    pass


class InvalidBehavior(ValueError):
    pass


class Kind(str, enum.Enum):
    ValidPlain = "ValidPlain"
    ValidTls = "ValidTls"
    TlsOnStandardPort = "TlsOnStandardPort"
    GarbageTransport = "GarbageTransport"
    NonIoTService = "NonIoTService"
    AliasedSubnet = "AliasedSubnet"
    AnonymousOpen = "AnonymousOpen"
    AuthRequired = "AuthRequired"
    WeakTls = "WeakTls"
    Tls13 = "Tls13"


WEAKNESSES = ("sha1", "short_key", "insecure_suite")


@dataclass(frozen=True, order=True)
class Behavior:
    kind: Kind
    arg: str | None = None

    @classmethod
    def parse(cls, text: str) -> "Behavior":
        name, _, arg = text.partition(":")
        try:
            kind = Kind(name)
        except ValueError:
            raise InvalidBehavior(f"unknown behavior {name!r}") from None
        if kind is Kind.WeakTls:
            if arg not in WEAKNESSES:
                raise InvalidBehavior(f"WeakTls needs one of {WEAKNESSES}, got {arg!r}")
        elif kind is Kind.AliasedSubnet:
            if arg:
                Prefix.parse(arg)
        elif arg:
            raise InvalidBehavior(f"{name} takes no argument")
        return cls(kind, arg or None)

    def __str__(self):
        return f"{self.kind.value}:{self.arg}" if self.arg else self.kind.value


class PortRole(str, enum.Enum):
    closed = "closed"
    garbage = "garbage"
    web = "web"
    tls_web = "tls_web"
    plain_app = "plain_app"
    tls_app = "tls_app"


ROLE_CLASS = {
    PortRole.closed: HostClass.NoResponse,
    PortRole.garbage: HostClass.FilteredTransport,
    PortRole.web: HostClass.TransportOnly,
    PortRole.tls_web: HostClass.TlsNoApp,
    PortRole.plain_app: HostClass.ValidPlain,
    PortRole.tls_app: HostClass.ValidTls,
}


@dataclass(frozen=True)
class Plant:
    address: int
    protocol: Protocol
    behaviors: frozenset[Behavior]
    index: int

    def has(self, kind: Kind) -> bool:
        return any(b.kind is kind for b in self.behaviors)

    def args(self, kind: Kind) -> list[str]:
        return sorted(b.arg for b in self.behaviors if b.kind is kind and b.arg)

    @property
    def alias_prefix(self) -> Prefix | None:
        if not self.has(Kind.AliasedSubnet):
            return None
        args = self.args(Kind.AliasedSubnet)
        return Prefix.parse(args[0]) if args else Prefix.enclosing(self.address, 64)

    def port_roles(self) -> tuple[PortRole, PortRole]:
        """(standard port, secure port) roles implied by the behavior set."""
        std = PortRole.closed
        if self.has(Kind.TlsOnStandardPort):
            std = PortRole.tls_web if self.has(Kind.NonIoTService) else PortRole.tls_app
        elif self.has(Kind.ValidPlain):
            std = PortRole.plain_app
        elif self.has(Kind.NonIoTService):
            std = PortRole.web
        elif self.has(Kind.GarbageTransport):
            std = PortRole.garbage
        sec = PortRole.closed
        if self.has(Kind.ValidTls):
            sec = PortRole.tls_app
        elif self.has(Kind.GarbageTransport):
            sec = PortRole.garbage
        return std, sec

    @property
    def tls_config(self) -> TlsServerConfig:
        versions = ["TLS1.2"]
        suites = list(MODERN_SUITES)
        weak = self.args(Kind.WeakTls)
        if self.has(Kind.Tls13):
            versions.append("TLS1.3")
            suites = list(TLS13_SUITES) + suites
        if "insecure_suite" in weak:
            versions = ["TLS1.0", "TLS1.1"] + versions
            suites += list(WEAK_SUITES)
        cert = CertSummary(
            common_name=f"{self.protocol.value.lower()}-{self.index:05d}.iot.example",
            san_names=(f"{self.protocol.value.lower()}-{self.index:05d}.iot.example",),
            signature_algorithm="sha1WithRSAEncryption" if "sha1" in weak else "sha256WithRSAEncryption",
            public_key_bits=1024 if "short_key" in weak else 2048,
        )
        return TlsServerConfig(tuple(versions), tuple(suites), cert)

    @property
    def amqp_external_only(self) -> bool:
        # half the locked-down AMQP brokers offer only EXTERNAL, the rest refuse guest
        return self.index % 2 == 1

    def validate(self) -> None:
        kinds = {b.kind for b in self.behaviors}
        service = {Kind.ValidPlain, Kind.ValidTls, Kind.TlsOnStandardPort, Kind.GarbageTransport,
                   Kind.NonIoTService}
        if not kinds & service:
            raise InvalidBehavior(f"{format_address(self.address)}: no service behavior")
        if {Kind.ValidPlain, Kind.TlsOnStandardPort} <= kinds:
            raise InvalidBehavior("ValidPlain and TlsOnStandardPort both claim the standard port")
        if {Kind.AnonymousOpen, Kind.AuthRequired} <= kinds:
            raise InvalidBehavior("AnonymousOpen and AuthRequired are exclusive")
        if kinds & {Kind.AnonymousOpen, Kind.AuthRequired} and self.protocol not in (Protocol.MQTT, Protocol.AMQP):
            raise InvalidBehavior("access behaviors apply to MQTT and AMQP only")
        tls_port = PortRole.tls_app in self.port_roles() or PortRole.tls_web in self.port_roles()
        if kinds & {Kind.WeakTls, Kind.Tls13} and not tls_port:
            raise InvalidBehavior("TLS properties need a TLS-speaking port")
        prefix = self.alias_prefix
        if prefix is not None and not prefix.contains(self.address):
            raise InvalidBehavior("aliased prefix must contain the planted address")

    @property
    def anonymous(self) -> bool:
        return self.has(Kind.AnonymousOpen)

    @property
    def valid(self) -> bool:
        return self.expected_class in (HostClass.ValidPlain, HostClass.ValidTls)

    @property
    def expected_class(self) -> HostClass:
        return max((ROLE_CLASS[r] for r in self.port_roles()), key=lambda c: c.rank)

    @property
    def tls_adopting(self) -> bool:
        return PortRole.tls_app in self.port_roles()

    def expected_findings(self) -> list[str]:
        if not self.tls_adopting:
            return []
        weak = self.args(Kind.WeakTls)
        found = set()
        if "insecure_suite" in weak:
            found.add("InsecureCipherAccepted")
        if "sha1" in weak:
            found.add("DeprecatedHashCert")
        if "short_key" in weak:
            found.add("ShortKeyCert")
        if found:
            found.add("GuidelineViolation")
        if self.has(Kind.Tls13):
            found.add("Tls13Supported")
        return sorted(found)

    def expected_access(self) -> str | None:
        if self.protocol not in (Protocol.MQTT, Protocol.AMQP) or not self.valid:
            return None
        return "AnonymousAllowed" if self.anonymous else "AuthRequired"

    def truth(self) -> dict:
        std, sec = self.port_roles()
        prefix = self.alias_prefix
        return {
            "address": format_address(self.address),
            "protocol": self.protocol.value,
            "behaviors": sorted(str(b) for b in self.behaviors),
            "port_roles": {str(s.port): r.value for s, r in zip(specs_for(self.protocol), (std, sec))},
            "expected_class": self.expected_class.value,
            "tls_adopting": self.tls_adopting,
            "expected_findings": self.expected_findings(),
            "expected_access": self.expected_access(),
            "aliased": prefix is not None,
            "alias_prefix": str(prefix) if prefix else None,
        }


def _behaviors(items: Iterable[str], protocol: Protocol) -> frozenset[Behavior]:
    parsed = {Behavior.parse(b) if isinstance(b, str) else b for b in items}
    kinds = {b.kind for b in parsed}
    # valid brokers always carry an access label; locked down unless told otherwise
    if protocol in (Protocol.MQTT, Protocol.AMQP) and not kinds & {Kind.AnonymousOpen, Kind.AuthRequired}:
        if kinds & {Kind.ValidPlain, Kind.ValidTls} or (Kind.TlsOnStandardPort in kinds
                                                          and Kind.NonIoTService not in kinds):
            parsed.add(Behavior(Kind.AuthRequired))
    return frozenset(parsed)


@dataclass
class PlantSpec:
    protocol: Protocol
    behaviors: tuple[str, ...]

    @classmethod
    def from_json(cls, obj: dict) -> "PlantSpec":
        return cls(Protocol(obj["protocol"].upper()), tuple(obj.get("behaviors") or ("ValidPlain",)))


@dataclass
class ClusterSpec:
    """``count`` plants inside ``prefix``, packed at ``density`` into a random span."""

    prefix: Prefix
    count: int
    density: float = 1.0
    plants: list[PlantSpec] = field(default_factory=lambda: [PlantSpec(Protocol.MQTT, ("ValidPlain",))])

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterSpec":
        plants = [PlantSpec.from_json(p) for p in obj.get("plants") or []]
        if not plants:
            plants = [PlantSpec(Protocol(obj.get("protocol", "MQTT").upper()),
                                tuple(obj.get("behaviors") or ("ValidPlain",)))]
        return cls(Prefix.parse(obj["prefix"]), int(obj["count"]), float(obj.get("density", 1.0)), plants)


@dataclass
class DeploymentSpec:
    address: str  # literal or "auto"
    protocol: Protocol
    behaviors: tuple[str, ...]

    @classmethod
    def from_json(cls, obj: dict) -> "DeploymentSpec":
        return cls(obj.get("address", "auto"), Protocol(obj["protocol"].upper()),
                   tuple(obj.get("behaviors") or ("ValidPlain",)))


@dataclass
class UniverseSpec:
    rng_seed: int = 0
    clusters: list[ClusterSpec] = field(default_factory=list)
    deployments: list[DeploymentSpec] = field(default_factory=list)
    domains: dict[str, list[str]] = field(default_factory=dict)
    auto_prefix: Prefix = field(default_factory=lambda: Prefix.parse("2001:db8:ffff::/48"))
    rtt_us: int = 20_000

    @classmethod
    def from_json(cls, obj: dict) -> "UniverseSpec":
        domains = {}
        for name, addrs in (obj.get("domains") or {}).items():
            domains[name] = [addrs] if isinstance(addrs, str) else list(addrs)
        return cls(
            rng_seed=int(obj.get("rng_seed", 0)),
            clusters=[ClusterSpec.from_json(c) for c in obj.get("clusters") or []],
            deployments=[DeploymentSpec.from_json(d) for d in obj.get("deployments") or []],
            domains=domains,
            auto_prefix=Prefix.parse(obj.get("auto_prefix", "2001:db8:ffff::/48")),
            rtt_us=int(obj.get("rtt_us", 20_000)),
        )

    @classmethod
    def load(cls, path) -> "UniverseSpec":
        return cls.from_json(read_json(path))


def _span_for(cluster: ClusterSpec) -> int:
    if not 0 < cluster.density <= 1:
        raise ValueError("cluster density must be in (0, 1]")
    span = math.ceil(cluster.count / cluster.density)
    if span > cluster.prefix.size:
        raise ValueError(f"{cluster.prefix}: {cluster.count} plants at density {cluster.density} do not fit")
    return span


class Universe:
    """Materialized plants, looked up by exact address or by aliased prefix."""

    def __init__(self, spec: UniverseSpec, plants: list[Plant]):
        self.spec = spec
        self.plants = plants
        self.by_address: dict[int, Plant] = {}
        self.aliases: PrefixTree[Plant] = PrefixTree()
        for p in plants:
            self.by_address[p.address] = p
            prefix = p.alias_prefix
            if prefix is not None:
                self.aliases.insert(prefix, p)
        self.resolver = MockResolver(spec.domains)

    def lookup(self, addr: int) -> Plant | None:
        plant = self.by_address.get(addr)
        if plant is not None:
            return plant
        hit = self.aliases.longest_match(addr)
        return hit[1] if hit else None

    def ground_truth(self) -> list[dict]:
        return [p.truth() for p in sorted(self.plants, key=lambda p: (p.address, p.protocol.value))]

    def write_ground_truth(self, path) -> int:
        return write_jsonl(path, self.ground_truth())

    def expected(self, addr: int, protocol: Protocol) -> HostClass:
        """Expected class of any address, planted or not."""
        plant = self.lookup(addr)
        if plant is None or plant.protocol is not protocol:
            return HostClass.NoResponse
        return plant.expected_class

    def addresses(self) -> list[int]:
        return sorted(self.by_address)

    def dispatcher(self):
        from .responders import SimDispatcher

        return SimDispatcher(self)


def build_universe(spec: UniverseSpec | dict) -> Universe:
    if isinstance(spec, dict):
        spec = UniverseSpec.from_json(spec)
    rng = random.Random(spec.rng_seed)
    plants: list[Plant] = []
    seen: set[int] = set()

    def plant(addr: int, protocol: Protocol, behaviors) -> None:
        if addr in seen:
            raise DuplicatePlantedAddress(format_address(addr))
        seen.add(addr)
        p = Plant(addr, protocol, _behaviors(behaviors, protocol), len(plants))
        p.validate()
        plants.append(p)

    for cluster in spec.clusters:
        span = _span_for(cluster)
        start = cluster.prefix.base + rng.randrange(0, cluster.prefix.size - span + 1)
        offsets = sorted(rng.sample(range(span), cluster.count))
        for i, off in enumerate(offsets):
            ps = cluster.plants[i % len(cluster.plants)]
            plant(start + off, ps.protocol, ps.behaviors)
    for dep in spec.deployments:
        if dep.address == "auto":
            while True:
                addr = spec.auto_prefix.base + rng.randrange(spec.auto_prefix.size)
                if addr not in seen:
                    break
        else:
            addr = parse_address(dep.address)
        plant(addr, dep.protocol, dep.behaviors)
    universe = Universe(spec, plants)
    for p in plants:
        # an aliased prefix serves every address in it; a second plant there is ambiguous
        owner = universe.aliases.longest_match(p.address)
        if owner is not None and owner[1] is not p:
            raise DuplicatePlantedAddress(f"{format_address(p.address)} lies inside aliased {owner[0]}")
    return universe


def spec_digest(spec: UniverseSpec) -> str:
    return hashlib.sha256(repr(spec).encode()).hexdigest()[:16]


def standard_spec(rng_seed: int = 7, clusters: int = 45, per_cluster: int = 22, aliased: int = 10,
                  without: Iterable[str] = ()) -> dict:
    """A universe exercising every behavior.

    ``clusters * per_cluster`` clustered plants plus ``aliased`` plants that
    each answer for a whole /64 (1000 plants with the defaults). Protocols
    named in ``without`` get no responders at all.
    """
    without = {w.upper() for w in without}
    mixes = [
        {"protocol": "MQTT", "behaviors": ["ValidPlain"]},
        {"protocol": "MQTT", "behaviors": ["ValidPlain", "AnonymousOpen"]},
        {"protocol": "MQTT", "behaviors": ["ValidPlain", "ValidTls", "WeakTls:sha1"]},
        {"protocol": "MQTT", "behaviors": ["TlsOnStandardPort", "Tls13"]},
        {"protocol": "MQTT", "behaviors": ["ValidTls", "AnonymousOpen", "WeakTls:insecure_suite"]},
        {"protocol": "AMQP", "behaviors": ["ValidPlain"]},
        {"protocol": "AMQP", "behaviors": ["ValidPlain", "AnonymousOpen"]},
        {"protocol": "AMQP", "behaviors": ["ValidTls", "WeakTls:short_key", "WeakTls:sha1"]},
        {"protocol": "AMQP", "behaviors": ["ValidPlain", "ValidTls", "Tls13"]},
        {"protocol": "OPCUA", "behaviors": ["ValidPlain"]},
        {"protocol": "OPCUA", "behaviors": ["ValidTls", "Tls13", "WeakTls:short_key"]},
        {"protocol": "COAP", "behaviors": ["ValidPlain"]},
        {"protocol": "COAP", "behaviors": ["ValidTls"]},
        {"protocol": "COAP", "behaviors": ["TlsOnStandardPort", "WeakTls:insecure_suite"]},
        {"protocol": "MQTT", "behaviors": ["GarbageTransport"]},
        {"protocol": "COAP", "behaviors": ["GarbageTransport"]},
        {"protocol": "MQTT", "behaviors": ["NonIoTService"]},
        {"protocol": "AMQP", "behaviors": ["NonIoTService", "TlsOnStandardPort"]},
        {"protocol": "OPCUA", "behaviors": ["NonIoTService", "ValidTls"]},
        {"protocol": "AMQP", "behaviors": ["GarbageTransport", "ValidTls"]},
    ]
    mixes = [m for m in mixes if m["protocol"] not in without]
    out = []
    for c in range(clusters):
        base = 0x20010DB8_0000_0000_0000_0000_0000_0000 + ((c + 1) << 80)
        # rotate the mix so each cluster starts elsewhere
        plants = mixes[c % len(mixes):] + mixes[:c % len(mixes)]
        out.append({"prefix": f"{format_address(base)}/116", "count": per_cluster,
                    "density": per_cluster / 256, "plants": plants})
    alias_plants = []
    protos = [p for p in ("MQTT", "AMQP", "OPCUA", "COAP") if p not in without]
    for i in range(aliased):
        proto = protos[i % len(protos)]
        net = 0x20010DB8_AAAA_0000_0000_0000_0000_0000 + (i << 64)
        behaviors = ["ValidTls", f"AliasedSubnet:{format_address(net)}/64"]
        if proto in ("MQTT", "AMQP"):
            behaviors = ["ValidPlain"] + behaviors
        alias_plants.append({"address": format_address(net + 0x1000 + i), "protocol": proto,
                             "behaviors": behaviors})
    domains = {"broker.example.org": [alias_plants[0]["address"]]} if alias_plants else {}
    return {"rng_seed": rng_seed, "clusters": out, "deployments": alias_plants, "domains": domains}

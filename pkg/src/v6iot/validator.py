"""Three-step validation: transport, (D)TLS, protocol-conformant reply."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .addresses import format_address, parse_address
from .model import HostClass, Protocol, ProtocolSpec, SourceTag, specs_for
from .prober.outcome import ProbeOutcome, TlsStatus, TransportStatus
from .prober.tls import TlsParams

__all__ = ["DeploymentRecord", "FunnelRow", "HostClassification", "HostClass", "classify_host",
           "classify_outcome", "classify_all", "dedupe_deployments", "funnel"]


def classify_outcome(o: ProbeOutcome) -> HostClass:
    """Class a single port reached."""
    if o.transport is TransportStatus.FaultyTransport:
        return HostClass.FilteredTransport  # step 1: responded, no valid transport
    if o.transport is not TransportStatus.Established:
        return HostClass.NoResponse
    if o.valid:
        return HostClass.ValidTls if o.tls is TlsStatus.Completed else HostClass.ValidPlain
    if o.tls is TlsStatus.Completed:
        return HostClass.TlsNoApp  # step 2 passed, step 3 failed
    return HostClass.TransportOnly


@dataclass
class HostClassification:
    address: int
    protocol: Protocol
    outcomes: list[ProbeOutcome]
    host_class: HostClass
    port_classes: dict[int, HostClass] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.host_class in (HostClass.ValidPlain, HostClass.ValidTls)

    def to_json(self) -> dict:
        return {"address": format_address(self.address), "protocol": self.protocol.value,
                "class": self.host_class.value,
                "port_classes": {str(p): c.value for p, c in sorted(self.port_classes.items())}}


def classify_host(outcomes: Iterable[ProbeOutcome]) -> HostClassification:
    outcomes = sorted(outcomes, key=lambda o: o.spec.port)
    if not outcomes:
        raise ValueError("no outcomes to classify")
    addr, proto = outcomes[0].address, outcomes[0].spec.protocol
    if any(o.address != addr or o.spec.protocol is not proto for o in outcomes):
        raise ValueError("outcomes span more than one (address, protocol)")
    ports = {o.spec.port: classify_outcome(o) for o in outcomes}
    best = max(ports.values(), key=lambda c: c.rank)
    return HostClassification(addr, proto, outcomes, best, ports)


def classify_all(outcomes: Iterable[ProbeOutcome]) -> list[HostClassification]:
    groups: dict[tuple[int, Protocol], list[ProbeOutcome]] = defaultdict(list)
    for o in outcomes:
        groups[(o.address, o.spec.protocol)].append(o)
    return [classify_host(groups[k]) for k in sorted(groups, key=lambda k: (k[0], k[1].value))]


@dataclass
class DeploymentRecord:
    address: int
    protocol: Protocol
    tls_adopting: bool
    host_class: HostClass
    valid_ports: list[int]
    tls_ports: list[int]
    tls_on_standard_port: bool
    tls: TlsParams | None
    meta: dict
    origins: list[str] = field(default_factory=list)
    aliased: bool = False
    as_annotation: dict | None = None
    cert_differs: bool = False

    @property
    def key(self) -> tuple[int, str]:
        return self.address, self.protocol.value

    def to_json(self) -> dict:
        return {
            "address": format_address(self.address),
            "protocol": self.protocol.value,
            "tls_adopting": self.tls_adopting,
            "class": self.host_class.value,
            "valid_ports": self.valid_ports,
            "tls_ports": self.tls_ports,
            "tls_on_standard_port": self.tls_on_standard_port,
            "tls": self.tls.to_json() if self.tls else None,
            "cert": self.tls.cert.to_json() if self.tls and self.tls.cert else None,
            "meta": self.meta,
            "origins": sorted(self.origins),
            "aliased": self.aliased,
            "as": self.as_annotation,
            "cert_differs": self.cert_differs,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DeploymentRecord":
        tls = obj.get("tls")
        return cls(
            address=parse_address(obj["address"]),
            protocol=Protocol(obj["protocol"]),
            tls_adopting=obj["tls_adopting"],
            host_class=HostClass(obj["class"]),
            valid_ports=list(obj.get("valid_ports") or []),
            tls_ports=list(obj.get("tls_ports") or []),
            tls_on_standard_port=obj.get("tls_on_standard_port", False),
            tls=TlsParams.from_json(tls) if tls else None,
            meta=obj.get("meta") or {},
            origins=list(obj.get("origins") or []),
            aliased=obj.get("aliased", False),
            as_annotation=obj.get("as"),
            cert_differs=obj.get("cert_differs", False),
        )

    def tls_spec(self) -> ProtocolSpec | None:
        """Where to run extra TLS handshakes: the secure port if it worked, else the standard one."""
        if not self.tls_ports:
            return None
        std, sec = specs_for(self.protocol)
        return sec if sec.port in self.tls_ports else std


def dedupe_deployments(classifications: Iterable[HostClassification],
                       origins: dict[int, set[SourceTag]] | None = None) -> list[DeploymentRecord]:
    """One record per valid (address, protocol), however many ports answered."""
    merged: dict[tuple[int, Protocol], list[HostClassification]] = defaultdict(list)
    for hc in classifications:
        merged[(hc.address, hc.protocol)].append(hc)
    records = []
    for (addr, proto), hcs in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        outcomes = sorted((o for hc in hcs for o in hc.outcomes), key=lambda o: o.spec.port)
        valid = [o for o in outcomes if o.valid]
        if not valid:
            continue
        tls_valid = [o for o in valid if o.tls is TlsStatus.Completed]
        best = max((classify_outcome(o) for o in valid), key=lambda c: c.rank)
        # prefer the secure port's handshake, then the standard port's fallback
        tls_ref = max(tls_valid, key=lambda o: o.spec.secured, default=None)
        plain_ref = next((o for o in valid if o.tls is not TlsStatus.Completed), None)
        ref = plain_ref or tls_ref
        meta = dict(ref.meta)
        fingerprints = {o.tls_params.cert.fingerprint for o in tls_valid if o.tls_params and o.tls_params.cert}
        tags = origins.get(addr, set()) if origins else set()
        records.append(DeploymentRecord(
            address=addr,
            protocol=proto,
            tls_adopting=bool(tls_valid),
            host_class=best,
            valid_ports=[o.spec.port for o in valid],
            tls_ports=[o.spec.port for o in tls_valid],
            tls_on_standard_port=any(o.tls_on_standard_port for o in tls_valid),
            tls=tls_ref.tls_params if tls_ref else None,
            meta=meta,
            origins=sorted(str(t) for t in tags),
            cert_differs=len(fingerprints) > 1,
        ))
    return records


@dataclass
class FunnelRow:
    protocol: Protocol
    port: int
    secured: bool
    hosts: int = 0
    transport: int = 0
    tls: int | None = None
    valid: int = 0

    @property
    def monotone(self) -> bool:
        steps = [self.hosts, self.transport] + ([self.tls] if self.tls is not None else []) + [self.valid]
        return all(a >= b for a, b in zip(steps, steps[1:]))

    def to_row(self) -> list:
        return [self.protocol.value, self.port, "tls" if self.secured else "standard", self.hosts,
                self.transport, "" if self.tls is None else self.tls, self.valid]


FUNNEL_HEADER = ["protocol", "port", "variant", "hosts", "transport", "tls", "valid"]


def funnel(outcomes: Iterable[ProbeOutcome], protocols: Iterable[Protocol] = tuple(Protocol)) -> list[FunnelRow]:
    """Per protocol and port: responsive hosts, established transports, TLS successes, valid.

    Hosts counts anything that answered at the transport layer (including
    faulty answers). The TLS column exists only for the secure port.
    """
    rows = {}
    for proto in protocols:
        for spec in specs_for(proto):
            rows[spec.port] = FunnelRow(proto, spec.port, spec.secured, tls=0 if spec.secured else None)
    for o in outcomes:
        row = rows.get(o.spec.port)
        if row is None:
            continue
        if o.transport in (TransportStatus.Established, TransportStatus.FaultyTransport):
            row.hosts += 1
        if o.transport is TransportStatus.Established:
            row.transport += 1
            if row.tls is not None and o.tls is TlsStatus.Completed:
                row.tls += 1
            if o.valid:
                row.valid += 1
    return list(rows.values())

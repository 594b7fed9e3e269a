"""Security grading of valid deployments.

Extra (D)TLS offers and access checks run as ordinary prober tasks, so they
share the politeness arbiter (per-host gap, global packet rate) with the
validation scan.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable

from .addresses import format_address, parse_address
from .model import Protocol, ProtocolSpec
from .prober.clients import Access, amqp_access, mqtt_access
from .prober.dispatch import DispatchError, PeerClosed, ProbeTimeout
from .prober.policy import Task, TaskResult
from .prober.probe import Prober, transport_status
from .prober.protocols import ProtocolError
from .prober.tls import ALL_SUITES, VERSIONS, CertSummary, ClientHello, TlsHandshakeError, TlsParams, suites_matching
from .validator import DeploymentRecord

__all__ = ["Access", "AccessResult", "Assessment", "Assessor", "Category", "GuidelineProfile",
           "SecurityFinding", "assess_access_control", "assess_tls"]


class Category(str, enum.Enum):
    InsecureCipherAccepted = "InsecureCipherAccepted"
    DeprecatedHashCert = "DeprecatedHashCert"
    ShortKeyCert = "ShortKeyCert"
    Tls13Supported = "Tls13Supported"
    AnonymousAccess = "AnonymousAccess"
    GuidelineViolation = "GuidelineViolation"


# categories that break the guideline profile
VIOLATIONS = (Category.InsecureCipherAccepted, Category.DeprecatedHashCert, Category.ShortKeyCert)


@dataclass(frozen=True)
class GuidelineProfile:
    version: str
    min_rsa_bits: int
    banned_hashes: tuple[str, ...]
    banned_suites: tuple[str, ...]
    tls13_suite_list: tuple[str, ...]

    @classmethod
    def from_json(cls, obj: dict) -> "GuidelineProfile":
        missing = {"min_rsa_bits", "banned_hashes", "banned_suites", "tls13_suite_list"} - obj.keys()
        if missing:
            raise ValueError(f"guideline profile lacks {sorted(missing)}")
        return cls(str(obj.get("version", "unversioned")), int(obj["min_rsa_bits"]),
                   tuple(h.lower() for h in obj["banned_hashes"]), tuple(obj["banned_suites"]),
                   tuple(obj["tls13_suite_list"]))

    @classmethod
    def load(cls, path=None) -> "GuidelineProfile":
        """Load a profile file; ``None`` means the packaged default."""
        if path is None:
            text = resources.files("v6iot").joinpath("data/guidelines.json").read_text(encoding="utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_json(json.loads(text))

    def to_json(self) -> dict:
        return {"version": self.version, "min_rsa_bits": self.min_rsa_bits,
                "banned_hashes": list(self.banned_hashes), "banned_suites": list(self.banned_suites),
                "tls13_suite_list": list(self.tls13_suite_list)}

    def insecure_offer(self, contact: str | None = None) -> ClientHello:
        suites = suites_matching(self.banned_suites, ALL_SUITES)
        return ClientHello(tuple(v for v in VERSIONS if v != "TLS1.3"), suites, None, contact)

    def tls13_offer(self, contact: str | None = None) -> ClientHello:
        return ClientHello(("TLS1.3",), self.tls13_suite_list, None, contact)

    def cert_issues(self, cert: CertSummary) -> list[tuple[Category, str, dict]]:
        issues = []
        if cert.signature_hash in self.banned_hashes:
            issues.append((Category.DeprecatedHashCert, f"certificate signed with {cert.signature_hash}",
                           {"signature_algorithm": cert.signature_algorithm,
                            "banned_hashes": list(self.banned_hashes)}))
        if cert.public_key_algorithm.upper() == "RSA" and cert.public_key_bits < self.min_rsa_bits:
            issues.append((Category.ShortKeyCert, f"RSA key of {cert.public_key_bits} bits",
                           {"public_key_bits": cert.public_key_bits, "min_rsa_bits": self.min_rsa_bits}))
        return issues


@dataclass
class SecurityFinding:
    address: int
    protocol: Protocol
    category: Category
    detail: str
    evidence: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"address": format_address(self.address), "protocol": self.protocol.value,
                "category": self.category.value, "detail": self.detail, "evidence": self.evidence}

    @classmethod
    def from_json(cls, obj: dict) -> "SecurityFinding":
        return cls(parse_address(obj["address"]), Protocol(obj["protocol"]), Category(obj["category"]),
                   obj["detail"], obj.get("evidence") or {})


@dataclass
class AccessResult:
    address: int
    protocol: Protocol
    port: int
    access: Access
    evidence: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"address": format_address(self.address), "protocol": self.protocol.value, "port": self.port,
                "access": self.access.value, "evidence": self.evidence}


@dataclass
class OfferResult:
    """What one graded handshake offer produced."""
    offer: str
    offered_versions: list[str]
    offered_suites: list[str]
    accepted: TlsParams | None = None
    error: str | None = None

    def evidence(self) -> dict:
        out = {"offer": self.offer, "offered_versions": self.offered_versions,
               "offered_suites": self.offered_suites}
        if self.accepted is not None:
            out["negotiated_version"] = self.accepted.version
            out["negotiated_suite"] = self.accepted.cipher_suite
        else:
            out["rejected"] = self.error
        return out


def _tls_spec(dep: DeploymentRecord) -> ProtocolSpec | None:
    return dep.tls_spec()


@dataclass
class Assessment:
    findings: list[SecurityFinding] = field(default_factory=list)
    access: list[AccessResult] = field(default_factory=list)
    offers: dict[tuple[int, str], list[OfferResult]] = field(default_factory=dict)

    def findings_for(self, address: int, protocol: Protocol) -> list[str]:
        return sorted(f.category.value for f in self.findings
                      if f.address == address and f.protocol is protocol
                      and f.category is not Category.AnonymousAccess)

    def access_for(self, address: int, protocol: Protocol) -> Access | None:
        for a in self.access:
            if a.address == address and a.protocol is protocol:
                return a.access
        return None


class Assessor:
    """Builds assessment tasks for deployments and folds their results into findings."""

    def __init__(self, prober: Prober, profile: GuidelineProfile | None = None,
                 observe_us: int = 10_000_000):
        self.prober = prober
        self.profile = profile or GuidelineProfile.load()
        self.observe_us = observe_us

    @property
    def contact(self) -> str:
        return self.prober.policy.contact

    # (D)TLS offers ---------------------------------------------------------

    def offer_task(self, dep: DeploymentRecord, name: str, hello: ClientHello,
                   sink: Callable[[OfferResult], None]) -> Task | None:
        spec = _tls_spec(dep)
        if spec is None:
            return None
        prober = self.prober

        def action(start_us: int) -> TaskResult:
            result = OfferResult(name, list(hello.versions), list(hello.cipher_suites))
            session = prober.open_session(dep.address, spec, "assess-" + name, start_us)
            try:
                session.connect(prober.policy.transport_timeout_us)
                result.accepted = session.start_tls(hello, prober.policy.transport_timeout_us)
            except TlsHandshakeError as exc:
                result.error = f"handshake refused: {exc}"
            except DispatchError as exc:
                result.error = f"transport {transport_status(exc).value}"
            finally:
                end = prober.finish(session)
            sink(result)
            return TaskResult(end)

        return Task(dep.address, spec.port, "assess-" + name, action)

    def tls_tasks(self, dep: DeploymentRecord, sink: Callable[[OfferResult], None]) -> list[Task]:
        if not dep.tls_adopting:
            return []
        subject = f"CN=v6iot research scanner, URI={self.contact}"
        offers = [("insecure", self.profile.insecure_offer(subject)), ("tls13", self.profile.tls13_offer(subject))]
        return [t for name, hello in offers if (t := self.offer_task(dep, name, hello, sink)) is not None]

    def tls_findings(self, dep: DeploymentRecord, offers: Iterable[OfferResult]) -> list[SecurityFinding]:
        found: list[SecurityFinding] = []

        def add(cat: Category, detail: str, evidence: dict):
            found.append(SecurityFinding(dep.address, dep.protocol, cat, detail, evidence))

        for res in offers:
            if res.accepted is None:
                continue
            if res.offer == "insecure":
                add(Category.InsecureCipherAccepted, f"accepted {res.accepted.cipher_suite}", res.evidence())
            elif res.offer == "tls13" and res.accepted.version == "TLS1.3":
                add(Category.Tls13Supported, f"accepted {res.accepted.cipher_suite}", res.evidence())
        cert = dep.tls.cert if dep.tls else None
        if cert is None:
            cert = next((r.accepted.cert for r in offers if r.accepted and r.accepted.cert), None)
        if cert is not None:
            for cat, detail, evidence in self.profile.cert_issues(cert):
                evidence["fingerprint"] = cert.fingerprint
                add(cat, detail, evidence)
        broken = sorted({f.category.value for f in found if f.category in VIOLATIONS})
        if broken:
            add(Category.GuidelineViolation, f"profile {self.profile.version}: {', '.join(broken)}",
                {"profile_version": self.profile.version, "violations": broken})
        return found

    # access control --------------------------------------------------------

    def access_spec(self, dep: DeploymentRecord) -> tuple[ProtocolSpec, bool] | None:
        """Port to test and whether it needs TLS; plaintext ports are preferred."""
        if dep.protocol not in (Protocol.MQTT, Protocol.AMQP) or not dep.valid_ports:
            return None
        plain = [p for p in dep.valid_ports if p not in dep.tls_ports]
        port = plain[0] if plain else dep.valid_ports[0]
        return ProtocolSpec.of(dep.protocol, port), port in dep.tls_ports

    def access_task(self, dep: DeploymentRecord, sink: Callable[[AccessResult], None]) -> Task | None:
        chosen = self.access_spec(dep)
        if chosen is None:
            return None
        spec, use_tls = chosen
        prober = self.prober

        def action(start_us: int) -> TaskResult:
            session = prober.open_session(dep.address, spec, "assess-access", start_us)
            try:
                access, evidence = self._check_access(session, dep.protocol, use_tls)
            finally:
                end = prober.finish(session)
            sink(AccessResult(dep.address, dep.protocol, spec.port, access, evidence))
            return TaskResult(end)

        return Task(dep.address, spec.port, "assess-access", action)

    def _check_access(self, session, protocol: Protocol, use_tls: bool) -> tuple[Access, dict]:
        pol = self.prober.policy
        try:
            session.connect(pol.transport_timeout_us)
            if use_tls:
                session.start_tls(self.prober.hello, pol.transport_timeout_us)
            if protocol is Protocol.MQTT:
                return mqtt_access(session, pol.app_timeout_us, pol.contact, self.observe_us)
            return amqp_access(session, pol.app_timeout_us, pol.contact)
        except (PeerClosed, ProbeTimeout) as exc:
            return Access.Indeterminate, {"error": f"connection lost: {type(exc).__name__}"}
        except (DispatchError, TlsHandshakeError, ProtocolError, ValueError) as exc:
            return Access.Indeterminate, {"error": f"{type(exc).__name__}: {exc}"}

    # whole batch -----------------------------------------------------------

    def assess(self, deployments: Iterable[DeploymentRecord]) -> Assessment:
        deployments = list(deployments)
        out = Assessment()
        tasks: list[Task] = []
        for dep in deployments:
            bucket = out.offers.setdefault(dep.key, [])
            tasks.extend(self.tls_tasks(dep, bucket.append))
            t = self.access_task(dep, out.access.append)
            if t is not None:
                tasks.append(t)
        self.prober.run(tasks)
        for dep in deployments:
            if dep.tls_adopting:
                out.findings.extend(self.tls_findings(dep, out.offers.get(dep.key, [])))
        for res in sorted(out.access, key=lambda r: (r.address, r.protocol.value)):
            if res.access is Access.AnonymousAllowed:
                out.findings.append(SecurityFinding(res.address, res.protocol, Category.AnonymousAccess,
                                                    "credential-free session accepted",
                                                    {"port": res.port, **res.evidence}))
        out.access.sort(key=lambda r: (r.address, r.protocol.value))
        out.findings.sort(key=lambda f: (f.address, f.protocol.value, f.category.value))
        return out


def assess_tls(deployment: DeploymentRecord, prober: Prober,
               profile: GuidelineProfile | None = None) -> list[SecurityFinding]:
    """Graded offers plus certificate checks for one TLS-adopting deployment."""
    if not deployment.tls_adopting:
        raise ValueError("deployment does not use TLS")
    assessor = Assessor(prober, profile)
    offers: list[OfferResult] = []
    prober.run(assessor.tls_tasks(deployment, offers.append))
    return assessor.tls_findings(deployment, offers)


def assess_access_control(deployment: DeploymentRecord, prober: Prober,
                          observe_us: int = 10_000_000) -> Access:
    if deployment.protocol not in (Protocol.MQTT, Protocol.AMQP):
        raise ValueError("access control is assessed for MQTT and AMQP only")
    results: list[AccessResult] = []
    task = Assessor(prober, observe_us=observe_us).access_task(deployment, results.append)
    if task is None:
        return Access.Indeterminate
    prober.run([task])
    return results[0].access

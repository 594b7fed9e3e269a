"""Alias detection by response similarity in the surrounding subnet.

For a valid deployment we probe ``k`` random neighbours inside its enclosing
prefix with the same handshake that validated it. A machine answering for
the whole prefix returns the same banner and certificate everywhere; a
normal host has silent neighbours.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .addresses import Prefix, format_address, parse_address
from .blockdedup import CidrSet
from .model import Protocol, ProtocolSpec
from .prober.outcome import ProbeOutcome
from .prober.policy import Task, TaskResult
from .prober.probe import Prober
from .validator import DeploymentRecord

__all__ = ["AliasVerdict", "Aliaser", "Method", "Reference", "default_similarity", "detect_alias",
           "draw_neighbors", "import_annotations"]


class Method(str, enum.Enum):
    SubnetSimilarity = "SubnetSimilarity"
    ImportedAnnotation = "ImportedAnnotation"


@dataclass(frozen=True)
class Reference:
    """The validated response neighbours are compared against."""
    spec: ProtocolSpec
    use_tls: bool
    meta: dict
    fingerprint: str | None

    @classmethod
    def of(cls, dep: DeploymentRecord) -> "Reference":
        plain = [p for p in dep.valid_ports if p not in dep.tls_ports]
        port = plain[0] if plain else dep.valid_ports[0]
        use_tls = port in dep.tls_ports
        fp = dep.tls.cert.fingerprint if use_tls and dep.tls and dep.tls.cert else None
        return cls(ProtocolSpec.of(dep.protocol, port), use_tls, dep.meta, fp)


Similarity = Callable[[Reference, ProbeOutcome], bool]


def default_similarity(ref: Reference, other: ProbeOutcome) -> bool:
    """Same application reply and, over TLS, the same certificate."""
    if not other.valid:
        return False
    if ref.fingerprint is not None:
        cert = other.tls_params.cert if other.tls_params else None
        if cert is None or cert.fingerprint != ref.fingerprint:
            return False
    return other.meta == ref.meta


default_similarity.description = "valid app reply with identical meta; identical cert fingerprint when TLS"


@dataclass
class AliasVerdict:
    address: int
    protocol: Protocol | None
    probed_neighbors: int
    similar_responses: int
    aliased: bool
    method: Method
    threshold: int | None = None
    prefix: str | None = None
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method is Method.SubnetSimilarity and self.aliased and self.similar_responses < (self.threshold or 0):
            raise ValueError("aliased verdict below the similarity threshold")

    def to_json(self) -> dict:
        return {"address": format_address(self.address),
                "protocol": self.protocol.value if self.protocol else None,
                "probed_neighbors": self.probed_neighbors, "similar_responses": self.similar_responses,
                "aliased": self.aliased, "method": self.method.value, "threshold": self.threshold,
                "prefix": self.prefix, "evidence": self.evidence}

    @classmethod
    def from_json(cls, obj: dict) -> "AliasVerdict":
        return cls(parse_address(obj["address"]), Protocol(obj["protocol"]) if obj.get("protocol") else None,
                   obj["probed_neighbors"], obj["similar_responses"], obj["aliased"], Method(obj["method"]),
                   obj.get("threshold"), obj.get("prefix"), obj.get("evidence") or {})


def draw_neighbors(address: int, prefix_len: int, k: int, rng_seed=0) -> list[int]:
    """``k`` distinct random addresses in the enclosing prefix, never ``address`` itself."""
    prefix = Prefix.enclosing(address, prefix_len)
    if k > prefix.size - 1:
        raise ValueError(f"/{prefix_len} holds fewer than {k} other addresses")
    rng = random.Random(f"{rng_seed}:{address}:{prefix_len}")
    out: list[int] = []
    seen = {address}
    while len(out) < k:
        a = prefix.base | rng.getrandbits(128 - prefix_len)
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


class Aliaser:
    def __init__(self, prober: Prober, k: int = 16, q: int | None = None, prefix_len: int = 64,
                 similarity: Similarity = default_similarity, rng_seed=0):
        q = k if q is None else q
        if not 0 < q <= k:
            raise ValueError("need 0 < q <= k")
        self.prober, self.k, self.q, self.prefix_len = prober, k, q, prefix_len
        self.similarity = similarity
        self.rng_seed = rng_seed

    def tasks(self, dep: DeploymentRecord, sink: Callable[[int, ProbeOutcome], None]) -> list[Task]:
        ref = Reference.of(dep)
        prober = self.prober

        def task_for(n: int) -> Task:
            def action(start_us: int) -> TaskResult:
                outcome, end = prober.attempt(n, ref.spec, start_us, ref.use_tls, purpose="alias")
                sink(n, outcome)
                return TaskResult(end)
            return Task(n, ref.spec.port, "alias", action)

        return [task_for(n) for n in draw_neighbors(dep.address, self.prefix_len, self.k, self.rng_seed)]

    def verdict(self, dep: DeploymentRecord, responses: dict[int, ProbeOutcome]) -> AliasVerdict:
        ref = Reference.of(dep)
        similar = sorted(n for n, o in responses.items() if self.similarity(ref, o))
        return AliasVerdict(
            dep.address, dep.protocol, len(responses), len(similar), len(similar) >= self.q,
            Method.SubnetSimilarity, self.q, str(Prefix.enclosing(dep.address, self.prefix_len)),
            {"port": ref.spec.port, "tls": ref.use_tls,
             "similarity": getattr(self.similarity, "description", getattr(self.similarity, "__name__", "custom")),
             "neighbors": [format_address(n) for n in sorted(responses)],
             "similar": [format_address(n) for n in similar]})

    def detect_all(self, deployments: Iterable[DeploymentRecord]) -> list[AliasVerdict]:
        deployments = list(deployments)
        responses: dict[tuple[int, str], dict[int, ProbeOutcome]] = {}
        tasks: list[Task] = []
        for dep in deployments:
            bucket = responses.setdefault(dep.key, {})
            tasks.extend(self.tasks(dep, bucket.__setitem__))
        self.prober.run(tasks)
        return [self.verdict(dep, responses[dep.key]) for dep in deployments]


def detect_alias(deployment: DeploymentRecord, prober: Prober, prefix_len: int = 64, k: int = 16,
                 q: int | None = None, similarity: Similarity = default_similarity, rng_seed=0) -> AliasVerdict:
    return Aliaser(prober, k, q, prefix_len, similarity, rng_seed).detect_all([deployment])[0]


def import_annotations(addresses: Iterable[int], prefixes: Iterable[Prefix],
                       protocol: Protocol | None = None) -> list[AliasVerdict]:
    """Verdicts from an external aliased-prefix list; nothing is probed."""
    tree = CidrSet(prefixes)
    return [AliasVerdict(a, protocol, 0, 0, tree.contains(a), Method.ImportedAnnotation)
            for a in addresses]

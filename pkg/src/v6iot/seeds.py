"""Provenance-tagged seedlists from hitlists, DNS zones and IPv4 scan records."""
from __future__ import annotations

import json
import logging
import random
import socket
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Protocol as TypingProtocol

from .addresses import MalformedAddress, Prefix, format_address, parse_address
from .io import UnreadableFile, file_identity, iter_lines
from .model import ProtocolSpec, ProvenancedAddress, SourceKind, SourceTag

log = logging.getLogger(__name__)


class ResolverUnavailable(RuntimeError):
    """The resolver as a whole cannot answer; aborts the stage."""


class ResolutionError(LookupError):
    """A single name could not be resolved; recorded and skipped."""


class Resolver(TypingProtocol):
    def aaaa(self, name: str) -> list[int]:
        """Return AAAA answers as integers; [] for NODATA/NXDOMAIN."""


class MockResolver:
    def __init__(self, records: Mapping[str, Iterable[int | str]] | None = None, failing: Iterable[str] = ()):
        self.records = {k.lower().rstrip("."): [parse_address(a) for a in v]
                        for k, v in (records or {}).items()}
        self.failing = {n.lower().rstrip(".") for n in failing}
        self.queries: list[str] = []

    def aaaa(self, name: str) -> list[int]:
        name = name.lower().rstrip(".")
        self.queries.append(name)
        if name in self.failing:
            raise ResolutionError(name)
        return list(self.records.get(name, []))


class SystemResolver:
    """Stub over the host resolver; only for manual runs."""

    def aaaa(self, name: str) -> list[int]:
        try:
            infos = socket.getaddrinfo(name, None, socket.AF_INET6, socket.SOCK_STREAM)
        except socket.gaierror as exc:
            if exc.errno in (socket.EAI_NONAME, getattr(socket, "EAI_NODATA", -5)):
                return []
            if exc.errno == socket.EAI_AGAIN:
                raise ResolutionError(name) from exc
            raise ResolverUnavailable(str(exc)) from exc
        return sorted({parse_address(info[4][0].split("%")[0]) for info in infos})


@dataclass
class SeedList:
    entries: dict[int, ProvenancedAddress] = field(default_factory=dict)
    source_manifest: list[tuple[SourceTag, str, str]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def add(self, address: int, tag: SourceTag, aliased: bool = False) -> None:
        entry = self.entries.get(address)
        if entry is None:
            self.entries[address] = ProvenancedAddress(address, {tag}, aliased)
        else:
            entry.origins.add(tag)
            entry.aliased = entry.aliased or aliased

    def merge(self, other: "SeedList") -> "SeedList":
        out = SeedList()
        for src in (self, other):
            for e in src.entries.values():
                for tag in e.origins:
                    out.add(e.address, tag, e.aliased)
            out.source_manifest.extend(src.source_manifest)
            out.failures.extend(src.failures)
        return out

    def addresses(self) -> list[int]:
        return sorted(self.entries)

    def by_source(self, kind: SourceKind) -> list[int]:
        return sorted(a for a, e in self.entries.items() if any(t.kind is kind for t in e.origins))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, address: int) -> bool:
        return address in self.entries

    def __iter__(self) -> Iterator[ProvenancedAddress]:
        for a in sorted(self.entries):
            yield self.entries[a]

    def to_rows(self) -> list[dict]:
        return [{"address": format_address(e.address),
                 "origins": sorted(str(t) for t in e.origins),
                 "aliased": e.aliased} for e in self]

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> "SeedList":
        out = cls()
        for row in rows:
            addr = parse_address(row["address"])
            for t in row["origins"]:
                out.add(addr, SourceTag.parse(t), row.get("aliased", False))
        return out


def load_alias_prefixes(path) -> list[Prefix]:
    prefixes = []
    for lineno, line in iter_lines(path):
        try:
            prefixes.append(Prefix.parse(line))
        except MalformedAddress as exc:
            raise MalformedAddress(line, lineno, exc.reason) from None
    return prefixes


def read_address_file(path) -> Iterator[tuple[int, int]]:
    """Yield (line number, address) from a one-literal-per-line file."""
    for lineno, line in iter_lines(path):
        try:
            yield lineno, parse_address(line)
        except MalformedAddress as exc:
            raise MalformedAddress(line, lineno, exc.reason) from None


def load_hitlist(path, alias_annotation_path=None, open_list: bool = False) -> SeedList:
    from .blockdedup import CidrSet

    kind = SourceKind.TUMOpen if open_list else SourceKind.TUMHitlist
    tag = SourceTag.seed(kind)
    aliased = CidrSet(load_alias_prefixes(alias_annotation_path)) if alias_annotation_path else CidrSet()
    seeds = SeedList()
    for _, addr in read_address_file(path):
        seeds.add(addr, tag, aliased.contains(addr))
    digest, stamp = file_identity(path)
    seeds.source_manifest.append((tag, digest, stamp))
    return seeds


def _resolve_into(seeds: SeedList, name: str, resolver: Resolver, tag: SourceTag) -> None:
    try:
        answers = resolver.aaaa(name)
    except ResolutionError as exc:
        log.info("resolution failed for %s: %s", name, exc)
        seeds.failures.append(name)
        return
    for addr in answers:
        seeds.add(addr, tag)


def resolve_zone_domains(domains: Iterable[str], resolver: Resolver, include_www: bool = True) -> SeedList:
    seeds = SeedList()
    plain, www = SourceTag.seed(SourceKind.DNSZone), SourceTag.seed(SourceKind.DNSZoneWWW)
    for domain in domains:
        domain = domain.strip().lower().rstrip(".")
        if not domain:
            continue
        _resolve_into(seeds, domain, resolver, plain)
        if include_www and not domain.startswith("www."):
            _resolve_into(seeds, "www." + domain, resolver, www)
    return seeds


@dataclass
class V4ScanRecord:
    v4_address: str
    rdns_name: str | None
    cert_names: list[str]
    port: int
    protocol: ProtocolSpec

    @classmethod
    def from_json(cls, obj: dict) -> "V4ScanRecord":
        proto = obj["protocol"]
        spec = ProtocolSpec.of(proto.upper(), int(obj["port"])) if isinstance(proto, str) else proto
        return cls(obj["v4_address"], obj.get("rdns_name") or None,
                   list(obj.get("cert_names") or []), int(obj["port"]), spec)


def load_v4_records(path) -> list[V4ScanRecord]:
    records = []
    for lineno, line in iter_lines(path):
        try:
            records.append(V4ScanRecord.from_json(json.loads(line)))
        except (ValueError, KeyError) as exc:
            raise UnreadableFile(f"{path}:{lineno}: bad scan record ({exc})") from None
    return records


def derive_from_v4(records: Iterable[V4ScanRecord], resolver: Resolver) -> SeedList:
    seeds = SeedList()
    tag = SourceTag.seed(SourceKind.V4Derived)
    for rec in records:
        names = ([rec.rdns_name] if rec.rdns_name else []) + list(rec.cert_names)
        for name in names:
            name = name.strip()
            if not name or name.startswith("*."):
                continue
            try:
                seeds.add(parse_address(name), tag)
                continue
            except MalformedAddress:
                pass
            if ":" in name:
                continue
            _resolve_into(seeds, name, resolver, tag)
    return seeds


def sample_seeds(seeds: SeedList, n: int, rng_seed) -> SeedList:
    if n < 0:
        raise ValueError("n must be non-negative")
    addrs = seeds.addresses()
    if n >= len(addrs):
        chosen = addrs
    else:
        chosen = sorted(random.Random(rng_seed).sample(addrs, n))
    out = SeedList(source_manifest=list(seeds.source_manifest))
    for a in chosen:
        e = seeds.entries[a]
        out.entries[a] = ProvenancedAddress(a, set(e.origins), e.aliased)
    return out

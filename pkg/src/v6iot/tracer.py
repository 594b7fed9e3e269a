"""Origin ledger and the generator metrics computed from it.

The ledger keeps its per-run counters up to date as origins and validity
arrive, so metrics are O(1) lookups. All ratios are exact ``Fraction``s;
reports convert to float only when writing CSV.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .addresses import Prefix, format_address, parse_address
from .blockdedup import PrefixTree
from .generators.base import GeneratorRun
from .io import iter_lines, read_jsonl
from .model import SourceKind, SourceTag


class EmptyGeneratorOutput(ValueError):
    pass


class NoFoundAddresses(ValueError):
    pass


class TargetUnreachable(RuntimeError):
    def __init__(self, result: "CombinationResult"):
        super().__init__(f"coverage target {result.target} unreachable; best {float(result.coverage):.4f}")
        self.result = result


class OriginLedger:
    def __init__(self):
        self.origins: dict[int, set[SourceTag]] = defaultdict(set)
        self.runs: dict[str, GeneratorRun] = {}
        self.emitted: dict[str, set[int]] = {}
        self.found_by: dict[int, set[str]] = defaultdict(set)  # address -> runs that emitted it
        self.valid: set[int] = set()
        self.aliased: set[int] = set()
        self._hits: Counter = Counter()
        self._denominator: Counter = Counter()

    # recording -------------------------------------------------------------

    def record_origin(self, address: int, origin: SourceTag) -> None:
        self.origins[address].add(origin)

    def record_run(self, run: GeneratorRun, addresses: Iterable[int]) -> None:
        name = run.name
        if name in self.runs and self.runs[name] != run:
            raise ValueError(f"run name {name!r} already recorded with different parameters")
        self.runs[name] = run
        emitted = self.emitted.setdefault(name, set())
        tag = run.tag
        for a in addresses:
            self.origins[a].add(tag)
            if a in emitted:
                continue
            emitted.add(a)
            others = self.found_by[a]
            others.add(name)
            if a in self.valid:
                # every earlier finder of a now shares it with one more run
                for g in others:
                    if g != name:
                        self._denominator[g] += 1
                self._hits[name] += 1
                self._denominator[name] += len(others)

    def mark_valid(self, address: int, aliased: bool = False) -> None:
        if aliased:
            self.aliased.add(address)
        if address in self.valid:
            return
        self.valid.add(address)
        finders = self.found_by.get(address, ())
        for g in finders:
            self._hits[g] += 1
            self._denominator[g] += len(finders)

    # queries --------------------------------------------------------------

    def multiplicity(self, address: int) -> int:
        return len(self.found_by.get(address, ()))

    def hits(self, run: str) -> int:
        return self._hits[run]

    def hitrate(self, run: str) -> Fraction:
        n = len(self.emitted.get(run, ()))
        if n == 0:
            raise EmptyGeneratorOutput(run)
        return Fraction(self._hits[run], n)

    def normalized_hitrates(self) -> dict[str, Fraction]:
        rates = {r: self.hitrate(r) for r in sorted(self.emitted) if self.emitted[r]}
        best = max(rates.values(), default=Fraction(0))
        if best == 0:
            return {r: Fraction(0) for r in rates}
        return {r: v / best for r, v in rates.items()}

    def uniqueness(self, run: str) -> Fraction:
        if self._hits[run] == 0:
            raise NoFoundAddresses(run)
        return Fraction(self._hits[run], self._denominator[run])

    def groups(self, include_seeds: bool = True) -> dict[str, set[int]]:
        """Address sets per generator run and, optionally, per seed source kind."""
        out = {name: set(addrs) for name, addrs in self.emitted.items()}
        if include_seeds:
            for addr, tags in self.origins.items():
                for t in tags:
                    if not t.is_generator:
                        out.setdefault(t.kind.value, set()).add(addr)
        return out

    def valid_of(self, group: str) -> set[int]:
        return self.groups().get(group, set()) & self.valid

    def gain(self, a: str, b: str) -> int:
        """Valid addresses found by ``a`` but not by ``b``."""
        groups = self.groups()
        return len((groups.get(a, set()) - groups.get(b, set())) & self.valid)

    # persistence ----------------------------------------------------------

    def to_rows(self) -> list[dict]:
        return [{"address": format_address(a), "origins": sorted(str(t) for t in tags),
                 "valid": a in self.valid, "aliased": a in self.aliased}
                for a, tags in sorted(self.origins.items())]

    @classmethod
    def from_rows(cls, rows: Iterable[dict], runs: Iterable[GeneratorRun] = ()) -> "OriginLedger":
        ledger = cls()
        by_tag = {str(r.tag): r for r in runs}
        per_run: dict[str, list[int]] = defaultdict(list)
        valid = []
        for row in rows:
            a = parse_address(row["address"])
            for text in row["origins"]:
                tag = SourceTag.parse(text)
                ledger.record_origin(a, tag)
                run = by_tag.get(text)
                if run is not None:
                    per_run[run.name].append(a)
            if row.get("valid"):
                valid.append((a, bool(row.get("aliased"))))
        for run in runs:
            ledger.record_run(run, per_run.get(run.name, []))
        for a, aliased in valid:
            ledger.mark_valid(a, aliased)
        return ledger


@dataclass
class RunMetrics:
    run: str
    source: str
    generated: int
    valid: int
    valid_aliased: int
    hitrate: Fraction
    normalized: Fraction
    uniqueness: Fraction | None

    def to_row(self) -> list:
        return [self.run, self.source, self.generated, self.valid, self.valid_aliased, float(self.hitrate),
                float(self.normalized), "" if self.uniqueness is None else float(self.uniqueness)]


METRICS_HEADER = ["run", "source", "generated", "valid", "valid_aliased", "hitrate", "normalized", "uniqueness"]


def run_metrics(ledger: OriginLedger) -> list[RunMetrics]:
    norm = ledger.normalized_hitrates()
    out = []
    for name in sorted(ledger.emitted):
        emitted = ledger.emitted[name]
        if not emitted:
            continue
        run = ledger.runs[name]
        hits = ledger.hits(name)
        out.append(RunMetrics(
            run=name,
            source=run.seed_source.value if run.seed_source else "",
            generated=len(emitted),
            valid=hits,
            valid_aliased=len(emitted & ledger.valid & ledger.aliased),
            hitrate=ledger.hitrate(name),
            normalized=norm[name],
            uniqueness=ledger.uniqueness(name) if hits else None,
        ))
    return out


def gain_table(ledger: OriginLedger) -> list[tuple[str, str, int]]:
    names = sorted(ledger.groups())
    return [(a, b, ledger.gain(a, b)) for a in names for b in names if a != b]


@dataclass
class CombinationResult:
    selected: list[str]
    coverage: Fraction
    target: Fraction
    reached: bool
    steps: list[tuple[str, int, Fraction]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"selected": self.selected, "coverage": float(self.coverage),
                "coverage_exact": f"{self.coverage.numerator}/{self.coverage.denominator}",
                "target": float(self.target), "reached": self.reached,
                "steps": [{"group": g, "marginal_gain": m, "coverage": float(c)} for g, m, c in self.steps]}


def _greedy(groups: Mapping[str, set[int]], valid: set[int], stop) -> tuple[list, set, list]:
    covered: set[int] = set()
    selected, steps = [], []
    useful = {g: s & valid for g, s in groups.items()}
    total = len(valid)
    while not stop(len(selected), len(covered)):
        best, best_gain = None, 0
        for g in sorted(useful):
            if g in selected:
                continue
            gain = len(useful[g] - covered)
            if gain > best_gain:
                best, best_gain = g, gain
        if best is None:
            break
        selected.append(best)
        covered |= useful[best]
        steps.append((best, best_gain, Fraction(len(covered), total) if total else Fraction(0)))
    return selected, covered, steps


def minimal_combination(groups: Mapping[str, set[int]], valid: set[int], coverage_target=1,
                        strict: bool = False) -> CombinationResult:
    """Greedy set cover of the valid addresses; ties broken by group name."""
    target = Fraction(coverage_target)
    if not 0 < target <= 1:
        raise ValueError("coverage_target must be in (0, 1]")
    valid = set(valid)
    total = len(valid)
    if total == 0:
        return CombinationResult([], Fraction(1), target, True)
    need = target * total
    selected, covered, steps = _greedy(groups, valid, lambda k, c: c >= need)
    coverage = Fraction(len(covered), total)
    result = CombinationResult(selected, coverage, target, coverage >= target, steps)
    if strict and not result.reached:
        raise TargetUnreachable(result)
    return result


def greedy_max_coverage(groups: Mapping[str, set[int]], valid: set[int], k: int) -> CombinationResult:
    """Greedy choice of at most ``k`` groups maximising covered valid addresses."""
    valid = set(valid)
    selected, covered, steps = _greedy(groups, valid, lambda n, c: n >= k)
    total = len(valid)
    coverage = Fraction(len(covered), total) if total else Fraction(1)
    return CombinationResult(selected, coverage, coverage, True, steps)


# AS annotation ----------------------------------------------------------------

@dataclass(frozen=True)
class AsAnnotation:
    asn: int | None = None
    as_type: str | None = None
    v6_only: bool | None = None

    def to_json(self) -> dict:
        return {"asn": self.asn, "as_type": self.as_type, "v6_only": self.v6_only}


def load_routing_snapshot(path) -> PrefixTree[int]:
    """Lines of ``prefix asn``; IPv4 rows are skipped."""
    tree: PrefixTree[int] = PrefixTree()
    for lineno, line in iter_lines(path):
        parts = line.split()
        if len(parts) != 2 or ":" not in parts[0]:
            continue
        tree.insert(Prefix.parse(parts[0]), int(parts[1].upper().removeprefix("AS")))
    return tree


def load_type_map(path) -> dict[int, str]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {int(str(k).upper().removeprefix("AS")): v for k, v in raw.items()}


def load_asn_set(path) -> set[int]:
    """One ASN per line, or a JSONL of v4 deployments carrying an ``asn`` field."""
    out = set()
    if str(path).endswith(".jsonl"):
        for row in read_jsonl(path):
            if row.get("asn") is not None:
                out.add(int(row["asn"]))
        return out
    for _, line in iter_lines(path):
        out.add(int(line.split()[0].upper().removeprefix("AS")))
    return out


def annotate_as(address: int, routing: PrefixTree[int], type_map: Mapping[int, str] | None = None,
                v4_asns: set[int] | None = None) -> AsAnnotation:
    hit = routing.longest_match(address)
    if hit is None:
        return AsAnnotation()
    asn = hit[1]
    v6_only = None if v4_asns is None else asn not in v4_asns
    return AsAnnotation(asn, (type_map or {}).get(asn), v6_only)


def seed_kinds() -> list[str]:
    return [k.value for k in SourceKind if k is not SourceKind.Generator]

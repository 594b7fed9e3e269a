"""Summary tables and plot data, computed from artifact files only.

Missing artifacts count as empty, so a campaign that found nothing still
gets complete all-zero tables.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .generators import GeneratorRun
from .io import read_json, read_jsonl, write_csv, write_json
from .model import ALL_SPECS, ProtocolSpec
from .prober.outcome import ProbeOutcome
from .prober.policy import HandshakeEvent, PolitenessPolicy, audit
from .tracer import METRICS_HEADER, OriginLedger, gain_table, greedy_max_coverage, minimal_combination, run_metrics
from .validator import FUNNEL_HEADER, funnel

TLS_CATEGORIES = ("InsecureCipherAccepted", "DeprecatedHashCert", "ShortKeyCert", "GuidelineViolation",
                  "Tls13Supported")

FIG1_HEADER = ["group", "group_kind", "protocol", "deployments", "tls_adopting"]
FIG3_HEADER = (["protocol", "ip_version", "deployments", "tls_adopting"]
               + [f"{c}_{k}" for c in TLS_CATEGORIES for k in ("count", "fraction")]
               + ["access_tested", "AnonymousAccess_count", "AnonymousAccess_fraction"])
SUMMARY_HEADER = ["protocol", "ip_version", "ports", "responsive_hosts", "valid", "valid_tls", "aliased",
                  "anonymous_access", "guideline_violations"]


def _rows(path: Path) -> list[dict]:
    return read_jsonl(path) if path.is_file() else []


def _campaign(out: Path) -> dict:
    p = out / "campaign.json"
    return read_json(p) if p.is_file() else {}


def _specs(campaign: dict) -> list[ProtocolSpec]:
    texts = campaign.get("specs")
    return sorted(ProtocolSpec.parse(t) for t in texts) if texts else list(ALL_SPECS)


def _frac(n: int, d: int) -> float:
    return float(Fraction(n, d)) if d else 0.0


def load_ledger(out: Path) -> OriginLedger:
    runs = [GeneratorRun.from_json(r) for r in _rows(out / "generator_runs.jsonl")]
    return OriginLedger.from_rows(_rows(out / "origins.jsonl"), runs)


def write_trace_reports(out: Path) -> dict:
    """Per-run metrics, pairwise gain and the combination choice."""
    out = Path(out)
    campaign = _campaign(out)
    ledger = load_ledger(out)
    write_csv(out / "fig2_hitrate_uniqueness.csv", METRICS_HEADER, [m.to_row() for m in run_metrics(ledger)])
    write_csv(out / "gain.csv", ["group", "versus", "gain"], gain_table(ledger))
    groups = ledger.groups(include_seeds=True)
    target = campaign.get("coverage_target", 1.0)
    k = campaign.get("combination_k", 3)
    combo = {
        "valid_addresses": len(ledger.valid),
        "minimal": minimal_combination(groups, ledger.valid, Fraction(target).limit_denominator(10**6)).to_json(),
        "max_coverage": {"k": k, **greedy_max_coverage(groups, ledger.valid, k).to_json()},
    }
    write_json(out / "combination.json", combo)
    return combo


@dataclass
class Summary:
    rows: list[list] = field(default_factory=list)
    funnel: list[list] = field(default_factory=list)
    politeness: dict = field(default_factory=dict)

    def text(self) -> str:
        width = [max(len(str(r[i])) for r in [SUMMARY_HEADER] + self.rows) for i in range(len(SUMMARY_HEADER))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, width)) for row in [SUMMARY_HEADER] + self.rows]
        if self.politeness:
            p = self.politeness
            lines.append(f"handshakes {p['handshakes']}, gap violations {p['gap_violations']}, "
                         f"peak {p['peak_packets_per_s']} packets/s")
        return "\n".join(lines)


def emit_report(out) -> Summary:
    out = Path(out)
    campaign = _campaign(out)
    specs = _specs(campaign)
    protocols = sorted({s.protocol for s in specs}, key=lambda p: p.value)

    outcomes = [ProbeOutcome.from_json(r) for r in _rows(out / "outcomes.jsonl")]
    rows = funnel(outcomes, protocols)
    funnel_rows = [r.to_row() for r in rows if any(r.port == s.port for s in specs)]
    write_csv(out / "funnel.csv", FUNNEL_HEADER, funnel_rows)

    deployments = _rows(out / "deployments.jsonl")
    findings = _rows(out / "findings.jsonl")
    access = _rows(out / "access.jsonl")

    # fig 1: found deployments per origin group
    fig1: Counter = Counter()
    fig1_tls: Counter = Counter()
    for d in deployments:
        groups = set()
        for tag in d.get("origins") or []:
            kind, _, rest = tag.partition(":")
            groups.add((rest.split("@")[0], "generator") if kind == "Generator" else (kind, "seed"))
        for g, gk in groups:
            fig1[(g, gk, d["protocol"])] += 1
            fig1_tls[(g, gk, d["protocol"])] += bool(d.get("tls_adopting"))
    write_csv(out / "fig1_found_by_source.csv", FIG1_HEADER,
              [[g, gk, p, n, fig1_tls[(g, gk, p)]] for (g, gk, p), n in sorted(fig1.items())])

    # fig 3: security issue fractions per protocol
    cats: dict[str, Counter] = defaultdict(Counter)
    subjects: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
    for f in findings:
        subjects[f["protocol"]][f["category"]].add(f["address"])
    for proto, by_cat in subjects.items():
        for cat, addrs in by_cat.items():
            cats[proto][cat] = len(addrs)
    tested = Counter(a["protocol"] for a in access)
    fig3, summary = [], []
    responsive = defaultdict(set)
    for o in outcomes:
        if o.transport.value in ("Established", "FaultyTransport"):
            responsive[o.spec.protocol.value].add(o.address)
    for proto in protocols:
        p = proto.value
        deps = [d for d in deployments if d["protocol"] == p]
        tls = sum(bool(d.get("tls_adopting")) for d in deps)
        row = [p, 6, len(deps), tls]
        for c in TLS_CATEGORIES:
            row += [cats[p][c], _frac(cats[p][c], tls)]
        row += [tested[p], cats[p]["AnonymousAccess"], _frac(cats[p]["AnonymousAccess"], tested[p])]
        fig3.append(row)
        ports = "/".join(str(s.port) for s in specs if s.protocol is proto)
        summary.append([p, 6, ports, len(responsive[p]), len(deps), tls,
                        sum(bool(d.get("aliased")) for d in deps), cats[p]["AnonymousAccess"],
                        cats[p]["GuidelineViolation"]])
    write_csv(out / "fig3_security.csv", FIG3_HEADER, fig3)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)

    politeness = {}
    hs_dir = out / "handshakes"
    if hs_dir.is_dir():
        events = [HandshakeEvent.from_json(r) for f in sorted(hs_dir.glob("*.jsonl")) for r in read_jsonl(f)]
        policy = PolitenessPolicy.from_json(campaign["politeness"]) if "politeness" in campaign else PolitenessPolicy()
        rep = audit(events, policy)
        politeness = {"handshakes": rep.handshakes, "packets": rep.packets, "min_host_gap_us": rep.min_host_gap_us,
                      "gap_violations": rep.gap_violations, "peak_packets_per_s": rep.peak_packets_per_s,
                      "rate_violations": rep.rate_violations}
        write_json(out / "politeness_audit.json", politeness)

    if (out / "origins.jsonl").is_file():
        write_trace_reports(out)
    return Summary(summary, funnel_rows, politeness)

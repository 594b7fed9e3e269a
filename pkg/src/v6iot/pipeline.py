"""Campaign orchestration: seeds, generators, blocklist/dedup, scan, validation,
alias detection, origin tracing, security assessment, reports.

Every stage reads its inputs from the output directory (or from the
in-memory cache when stages run back to back) and writes its artifacts
there, so stages can be run one at a time from the command line.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import report
from .addresses import format_address, parse_address
from .aliaser import AliasVerdict, Aliaser, import_annotations
from .assessor import Assessor, GuidelineProfile
from .blockdedup import CidrSet, DedupFilter, Seen, load_blocklist
from .config import CampaignConfig
from .generators import GENERATORS, GeneratorRun, Scanlist, Technique, import_external
from .io import iter_lines, read_json, read_jsonl, write_json, write_jsonl
from .model import SourceTag
from .prober import Politeness, Prober, ProbeOutcome, WallClock, schedule_batch
from .prober.dispatch import SocketDispatcher
from .seeds import (SeedList, SystemResolver, derive_from_v4, load_alias_prefixes, load_hitlist,
                    load_v4_records, resolve_zone_domains, sample_seeds)
from .tracer import OriginLedger, annotate_as, load_asn_set, load_routing_snapshot, load_type_map
from .validator import DeploymentRecord, classify_all, dedupe_deployments

log = logging.getLogger(__name__)

STAGES = ("seeds", "generate", "scan", "validate", "alias", "trace", "assess", "report")


class StageFailed(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class MissingArtifact(FileNotFoundError):
    pass


@dataclass
class PlanLine:
    seq: int
    at_us: int
    address: int
    port: int

    def text(self) -> str:
        from .prober.policy import iso

        return f"{self.seq}\t{iso(self.at_us)}\t{format_address(self.address)}\t{self.port}"


@dataclass
class Pipeline:
    config: CampaignConfig
    dry_run: bool = False
    echo: Callable[[str], None] = print
    _cache: dict = field(default_factory=dict, repr=False)
    _prober: Prober | None = field(default=None, repr=False)
    _universe: object = field(default=None, repr=False)

    # plumbing --------------------------------------------------------------

    @property
    def out(self) -> Path:
        return self.config.output

    def path(self, name: str) -> Path:
        return self.out / name

    def _put_jsonl(self, name: str, rows: list[dict]) -> None:
        self._cache[name] = rows
        if not self.dry_run:
            self.path(name).parent.mkdir(parents=True, exist_ok=True)
            write_jsonl(self.path(name), rows)

    def _get_jsonl(self, name: str) -> list[dict]:
        if name in self._cache:
            return self._cache[name]
        p = self.path(name)
        if not p.is_file():
            raise MissingArtifact(f"{p} is missing; run the stage that produces it first")
        rows = read_jsonl(p)
        self._cache[name] = rows
        return rows

    def _put_json(self, name: str, obj) -> None:
        self._cache[name] = obj
        if not self.dry_run:
            self.path(name).parent.mkdir(parents=True, exist_ok=True)
            write_json(self.path(name), obj)

    @property
    def universe(self):
        if self._universe is None and self.config.harness is not None:
            from .harness import UniverseSpec, build_universe

            self._universe = build_universe(UniverseSpec.load(self.config.harness))
        return self._universe

    @property
    def resolver(self):
        return self.universe.resolver if self.universe is not None else SystemResolver()

    @property
    def prober(self) -> Prober:
        if self._prober is None:
            policy = self.config.politeness
            state_path = self.path("politeness_state.json")
            if state_path.is_file():
                politeness = Politeness.from_json(read_json(state_path), policy)
            else:
                politeness = Politeness(policy)
            if self.universe is not None:
                dispatcher = self.universe.dispatcher()
            else:
                dispatcher = SocketDispatcher()
                politeness.wait = WallClock(politeness.now_us)
            self._prober = Prober(dispatcher, policy, politeness)
        return self._prober

    def _flush_probes(self, stage: str) -> None:
        """Persist this stage's handshake log and the arbiter state."""
        prober = self._prober
        if prober is None:
            return
        self._put_jsonl(f"handshakes/{stage}.jsonl", [e.to_json() for e in prober.events])
        prober.events.clear()
        self._put_json("politeness_state.json", prober.politeness.to_json())
        # the next stage resumes from the persisted state, exactly as a separate invocation would
        self._prober = None

    # stages -----------------------------------------------------------------

    def stage_seeds(self) -> SeedList:
        cfg = self.config
        seeds = SeedList()
        if "hitlist" in cfg.seeds:
            seeds = seeds.merge(load_hitlist(cfg.seeds["hitlist"], cfg.alias_prefixes))
        if "hitlist_open" in cfg.seeds:
            seeds = seeds.merge(load_hitlist(cfg.seeds["hitlist_open"], cfg.alias_prefixes, open_list=True))
        if "zone_domains" in cfg.seeds:
            domains = [line for _, line in iter_lines(cfg.seeds["zone_domains"])]
            seeds = seeds.merge(resolve_zone_domains(domains, self.resolver, cfg.include_www))
        if "v4_records" in cfg.seeds:
            seeds = seeds.merge(derive_from_v4(load_v4_records(cfg.seeds["v4_records"]), self.resolver))
        if cfg.alias_prefixes is not None:
            aliased = CidrSet(load_alias_prefixes(cfg.alias_prefixes))
            for e in seeds:
                e.aliased = e.aliased or aliased.contains(e.address)
        self._put_jsonl("seeds.jsonl", seeds.to_rows())
        self._put_json("seed_manifest.json", {
            "sources": [{"tag": str(t), "sha256": d, "timestamp": ts} for t, d, ts in seeds.source_manifest],
            "failures": sorted(seeds.failures),
            "count": len(seeds),
        })
        self._put_json("campaign.json", self.campaign_echo())
        log.info("seeds: %d addresses", len(seeds))
        return seeds

    def campaign_echo(self) -> dict:
        """Path-free view of the config; the report reads its parameters from here."""
        cfg = self.config
        return {"specs": [str(s) for s in cfg.specs], "rng_seed": cfg.rng_seed,
                "seed_sources": sorted(cfg.seeds), "seed_sample": cfg.seed_sample,
                "generators": [{"name": g.name, "technique": g.technique.value,
                                "seed_source": g.seed_source.value if g.seed_source else None,
                                "budget": g.budget, "rng_seed": g.rng_seed, "params": g.params}
                               for g in cfg.generators],
                "politeness": cfg.politeness.to_json(), "alias": cfg.alias,
                "coverage_target": cfg.coverage_target, "combination_k": cfg.combination_k,
                "dedup": {"fpr": cfg.dedup_fpr, "capacity": cfg.dedup_capacity}}

    def load_seeds(self) -> SeedList:
        return SeedList.from_rows(self._get_jsonl("seeds.jsonl"))

    def stage_generate(self) -> list[Scanlist]:
        cfg = self.config
        seeds = self.load_seeds()
        blocked = self.blocklist()
        out: list[Scanlist] = []
        for g in cfg.generators:
            if g.technique is Technique.ExternalImport:
                scan = import_external(g.path, g.name, g.seed_source)
            else:
                pool = seeds if g.seed_source is None else _only(seeds, g.seed_source)
                sample = sample_seeds(pool, cfg.seed_sample, g.rng_seed)
                gen = GENERATORS[g.technique](budget=g.budget, name=g.name, seed_source=g.seed_source,
                                              rng_seed=g.rng_seed, **g.params)
                gen.fit(sample.addresses())
                if g.technique is Technique.ActivePartition and not self.dry_run:
                    scan = gen.generate(feedback_fn=lambda batch: self._feedback(batch, blocked))
                else:
                    scan = gen.generate()
            out.append(scan)
            self._cache[f"scanlists/{g.name}.txt"] = list(scan.addresses)
            if not self.dry_run:
                self.path("scanlists").mkdir(parents=True, exist_ok=True)
                scan.write(self.path(f"scanlists/{g.name}.txt"))
            log.info("generate: %s emitted %d", g.name, len(scan))
        self._put_jsonl("generator_runs.jsonl", [s.run.to_json() for s in out])
        feedback = self._cache.pop("_feedback", {})
        self._put_jsonl("feedback_outcomes.jsonl",
                        [o.to_json() for _, o in sorted(feedback.items())])
        self._flush_probes("generate")
        return out

    def _feedback(self, batch: list[int], blocked: CidrSet) -> set[int]:
        """Probe one active-generator batch; the scan stage reuses these outcomes."""
        store: dict = self._cache.setdefault("_feedback", {})
        targets = [(a, s) for a in sorted(set(batch)) if not blocked.contains(a)
                   for s in self.config.specs if (a, s.port) not in store]
        for o in self.prober.probe_all(targets, rng_seed=self.config.rng_seed, purpose="feedback"):
            store[(o.address, o.spec.port)] = o
        return {a for a in batch if any(store.get((a, s.port)) and store[(a, s.port)].valid
                                        for s in self.config.specs)}

    def blocklist(self) -> CidrSet:
        return load_blocklist(self.config.blocklist) if self.config.blocklist else CidrSet()

    def runs(self) -> list[GeneratorRun]:
        return [GeneratorRun.from_json(r) for r in self._get_jsonl("generator_runs.jsonl")]

    def scanlist(self, name: str) -> list[int]:
        key = f"scanlists/{name}.txt"
        if key not in self._cache:
            p = self.path(key)
            if not p.is_file():
                raise MissingArtifact(f"{p} is missing; run the generate stage first")
            self._cache[key] = [parse_address(line) for _, line in iter_lines(p)]
        return self._cache[key]

    def candidates(self) -> tuple[list[int], int, int]:
        """Seeds then scanlists, blocklisted space removed, duplicates suppressed."""
        blocked = self.blocklist()
        dedup = DedupFilter(self.config.dedup_capacity, self.config.dedup_fpr)
        fresh, n_blocked, n_dup = [], 0, 0
        streams: list[Iterable[int]] = [self.load_seeds().addresses()]
        streams += [self.scanlist(r.name) for r in self.runs()]
        for stream in streams:
            for a in stream:
                if blocked.contains(a):
                    n_blocked += 1
                elif dedup.check_and_insert(a) is Seen.Fresh:
                    fresh.append(a)
                else:
                    n_dup += 1
        return fresh, n_blocked, n_dup

    def stage_scan(self) -> list[ProbeOutcome] | list[PlanLine]:
        cfg = self.config
        fresh, n_blocked, n_dup = self.candidates()
        reused = {}
        if self.path("feedback_outcomes.jsonl").is_file() or "feedback_outcomes.jsonl" in self._cache:
            for row in self._get_jsonl("feedback_outcomes.jsonl"):
                o = ProbeOutcome.from_json(row)
                reused[(o.address, o.spec.port)] = o
        targets = [(a, s) for a in fresh for s in cfg.specs if (a, s.port) not in reused]
        log.info("scan: %d candidates, %d blocked, %d duplicates, %d probes", len(fresh), n_blocked, n_dup,
                 len(targets))
        if self.dry_run:
            plan = schedule_batch(targets, cfg.politeness, self._clock(), cfg.rng_seed)
            lines = [PlanLine(p.seq, p.at_us, p.target[0], p.target[1].port) for p in plan]
            for line in lines:
                self.echo(line.text())
            return lines
        self.path("targets.txt").write_text("".join(format_address(a) + "\n" for a in fresh), encoding="utf-8")
        outcomes = self.prober.probe_all(targets, rng_seed=cfg.rng_seed)
        wanted = set(fresh)
        outcomes += [o for o in reused.values() if o.address in wanted]
        outcomes.sort(key=lambda o: (o.address, o.spec.port))
        self._put_jsonl("outcomes.jsonl", [o.to_json() for o in outcomes])
        self._put_json("scan_stats.json", {"candidates": len(fresh), "blocked": n_blocked,
                                           "duplicates": n_dup, "probes": len(targets),
                                           "reused_feedback": len(outcomes) - len(targets)})
        self._flush_probes("scan")
        return outcomes

    def _clock(self) -> int:
        p = self.path("politeness_state.json")
        return read_json(p)["clock_us"] if p.is_file() else 0

    def origins(self) -> dict[int, set[SourceTag]]:
        out: dict[int, set[SourceTag]] = {}
        for e in self.load_seeds():
            out.setdefault(e.address, set()).update(e.origins)
        for run in self.runs():
            for a in self.scanlist(run.name):
                out.setdefault(a, set()).add(run.tag)
        return out

    def outcomes(self) -> list[ProbeOutcome]:
        return [ProbeOutcome.from_json(r) for r in self._get_jsonl("outcomes.jsonl")]

    def stage_validate(self) -> list[DeploymentRecord]:
        classes = classify_all(self.outcomes())
        self._put_jsonl("classifications.jsonl", [c.to_json() for c in classes])
        deployments = dedupe_deployments(classes, self.origins())
        self._put_jsonl("deployments.jsonl", [d.to_json() for d in deployments])
        log.info("validate: %d hosts classified, %d deployments", len(classes), len(deployments))
        return deployments

    def deployments(self) -> list[DeploymentRecord]:
        return [DeploymentRecord.from_json(r) for r in self._get_jsonl("deployments.jsonl")]

    def stage_alias(self) -> list[AliasVerdict]:
        cfg = self.config
        deps = self.deployments()
        aliaser = Aliaser(self.prober, cfg.alias["k"], cfg.alias["q"], cfg.alias["prefix_len"],
                          rng_seed=cfg.rng_seed)
        verdicts = aliaser.detect_all(deps)
        if cfg.alias_prefixes is not None:
            prefixes = load_alias_prefixes(cfg.alias_prefixes)
            for d in deps:
                verdicts.extend(import_annotations([d.address], prefixes, d.protocol))
        flagged = {(v.address, v.protocol) for v in verdicts if v.aliased}
        for d in deps:
            d.aliased = (d.address, d.protocol) in flagged
        self._put_jsonl("aliases.jsonl", [v.to_json() for v in verdicts])
        self._put_jsonl("deployments.jsonl", [d.to_json() for d in deps])
        self._flush_probes("alias")
        log.info("alias: %d of %d deployments aliased", len(flagged), len(deps))
        return verdicts

    def ledger(self) -> OriginLedger:
        ledger = OriginLedger()
        for e in self.load_seeds():
            for t in e.origins:
                ledger.record_origin(e.address, t)
        for run in self.runs():
            ledger.record_run(run, self.scanlist(run.name))
        for d in self.deployments():
            ledger.mark_valid(d.address, d.aliased)
        return ledger

    def stage_trace(self) -> OriginLedger:
        ledger = self.ledger()
        self._put_jsonl("origins.jsonl", ledger.to_rows())
        ann = self.config.as_annotation
        if ann:
            routing = load_routing_snapshot(ann["routing"])
            types = load_type_map(ann["types"]) if "types" in ann else None
            v4 = load_asn_set(ann["v4_asns"]) if "v4_asns" in ann else None
            deps = self.deployments()
            for d in deps:
                d.as_annotation = annotate_as(d.address, routing, types, v4).to_json()
            self._put_jsonl("deployments.jsonl", [d.to_json() for d in deps])
        if not self.dry_run:
            report.write_trace_reports(self.out)
        return ledger

    def stage_assess(self):
        profile = GuidelineProfile.load(self.config.guidelines)
        result = Assessor(self.prober, profile).assess(self.deployments())
        self._put_jsonl("findings.jsonl", [f.to_json() for f in result.findings])
        self._put_jsonl("access.jsonl", [a.to_json() for a in result.access])
        self._put_json("guideline_profile.json", profile.to_json())
        self._flush_probes("assess")
        log.info("assess: %d findings", len(result.findings))
        return result

    def stage_report(self) -> report.Summary:
        summary = report.emit_report(self.out)
        self.echo(summary.text())
        return summary

    def run(self, stages: Iterable[str] = STAGES):
        """Run stages in order; a failing stage stops the campaign, earlier artifacts stay."""
        results = {}
        stages = list(stages)
        if self.dry_run:
            stages = [s for s in stages if s in ("seeds", "generate", "scan")]
        for name in stages:
            try:
                results[name] = getattr(self, "stage_" + name)()
            except Exception as exc:  # noqa: BLE001 - reported as a partial failure
                log.exception("stage %s failed", name)
                raise StageFailed(name, exc) from exc
        return results


def _only(seeds: SeedList, kind) -> SeedList:
    out = SeedList(source_manifest=list(seeds.source_manifest))
    for a in seeds.by_source(kind):
        out.entries[a] = seeds.entries[a]
    return out


def run_pipeline(config: CampaignConfig, stages: Iterable[str] = STAGES, dry_run: bool = False,
                 echo: Callable[[str], None] = print) -> int:
    """Exit status: 0 on success, 2 when a stage failed."""
    try:
        Pipeline(config, dry_run, echo).run(stages)
    except StageFailed as exc:
        echo(f"error: {exc}")
        return 2
    return 0

"""Campaign configuration: one JSON file, relative paths resolved against it."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .generators import Technique
from .model import SourceKind, ProtocolSpec, specs_for
from .prober.policy import PolitenessPolicy


class ConfigError(ValueError):
    """Invalid or incomplete campaign configuration (exit status 1)."""


SEED_KEYS = ("hitlist", "hitlist_open", "zone_domains", "v4_records")


@dataclass
class GeneratorSpec:
    name: str
    technique: Technique
    seed_source: SourceKind | None = None
    budget: int | None = None
    rng_seed: int = 0
    params: dict = field(default_factory=dict)
    path: Path | None = None  # ExternalImport only

    @classmethod
    def from_json(cls, obj: dict, base: Path) -> "GeneratorSpec":
        try:
            technique = Technique(obj["technique"])
        except (KeyError, ValueError):
            raise ConfigError(f"generator needs a known technique, got {obj.get('technique')!r}") from None
        name = obj.get("name") or technique.value
        src = obj.get("seed_source")
        try:
            seed_source = SourceKind(src) if src else None
        except ValueError:
            raise ConfigError(f"generator {name}: unknown seed_source {src!r}") from None
        path = obj.get("path")
        if technique is Technique.ExternalImport and not path:
            raise ConfigError(f"generator {name}: ExternalImport needs a path")
        budget = obj.get("budget")
        if technique not in (Technique.ExternalImport,) and (not isinstance(budget, int) or budget < 0):
            raise ConfigError(f"generator {name}: budget must be a non-negative integer")
        return cls(name, technique, seed_source, budget, int(obj.get("rng_seed", 0)),
                   dict(obj.get("params") or {}), _resolve(base, path) if path else None)


@dataclass
class CampaignConfig:
    specs: list[ProtocolSpec]
    seeds: dict[str, Path]
    output: Path
    alias_prefixes: Path | None = None
    include_www: bool = True
    seed_sample: int = 10_000
    generators: list[GeneratorSpec] = field(default_factory=list)
    politeness: PolitenessPolicy = field(default_factory=PolitenessPolicy)
    blocklist: Path | None = None
    harness: Path | None = None
    guidelines: Path | None = None
    alias: dict = field(default_factory=lambda: {"k": 16, "q": 16, "prefix_len": 64})
    as_annotation: dict[str, Path] = field(default_factory=dict)
    dedup_fpr: float = 1e-4
    dedup_capacity: int = 10_000_000
    coverage_target: float = 1.0
    combination_k: int = 3
    rng_seed: int = 0
    source: Path | None = None

    @classmethod
    def from_json(cls, obj: dict, base: str | os.PathLike = ".") -> "CampaignConfig":
        base = Path(base)
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        specs = _parse_specs(obj.get("protocols") or ["MQTT", "AMQP", "OPCUA", "COAP"])
        seeds_obj = obj.get("seeds") or {}
        seeds = {k: _resolve(base, seeds_obj[k]) for k in SEED_KEYS if seeds_obj.get(k)}
        if not seeds:
            raise ConfigError(f"at least one seed source is required ({', '.join(SEED_KEYS)})")
        if "output" not in obj:
            raise ConfigError("config lacks an output directory")
        try:
            politeness = PolitenessPolicy.from_json(obj.get("politeness") or {})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"politeness: {exc}") from None
        alias = {"k": 16, "q": None, "prefix_len": 64, **(obj.get("alias") or {})}
        alias["q"] = alias["k"] if alias["q"] is None else alias["q"]
        dedup = obj.get("dedup") or {}
        cfg = cls(
            specs=specs,
            seeds=seeds,
            output=_resolve(base, obj["output"]),
            alias_prefixes=_resolve(base, seeds_obj["alias_prefixes"]) if seeds_obj.get("alias_prefixes") else None,
            include_www=bool(seeds_obj.get("include_www", True)),
            seed_sample=int(obj.get("seed_sample", 10_000)),
            generators=[GeneratorSpec.from_json(g, base) for g in obj.get("generators") or []],
            politeness=politeness,
            blocklist=_resolve(base, obj["blocklist"]) if obj.get("blocklist") else None,
            harness=_resolve(base, obj["harness"]) if obj.get("harness") else None,
            guidelines=_resolve(base, obj["guidelines"]) if obj.get("guidelines") else None,
            alias=alias,
            as_annotation={k: _resolve(base, v) for k, v in (obj.get("as_annotation") or {}).items()},
            dedup_fpr=float(dedup.get("fpr", 1e-4)),
            dedup_capacity=int(dedup.get("capacity", 10_000_000)),
            coverage_target=float(obj.get("coverage_target", 1.0)),
            combination_k=int(obj.get("combination_k", 3)),
            rng_seed=int(obj.get("rng_seed", 0)),
        )
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CampaignConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        cfg = cls.from_json(obj, path.parent)
        cfg.source = path
        return cfg

    def check(self) -> None:
        """Every referenced input must exist; the output must be creatable."""
        names = [("seed source " + k, p) for k, p in self.seeds.items()]
        names += [("alias prefix file", self.alias_prefixes), ("blocklist", self.blocklist),
                  ("harness spec", self.harness), ("guideline profile", self.guidelines)]
        names += [(f"generator {g.name} input", g.path) for g in self.generators]
        names += [(f"AS annotation {k}", p) for k, p in self.as_annotation.items()]
        for what, p in names:
            if p is not None and not p.is_file():
                raise ConfigError(f"{what} not found: {p}")
        unknown = set(self.as_annotation) - {"routing", "types", "v4_asns"}
        if unknown:
            raise ConfigError(f"unknown as_annotation keys {sorted(unknown)}")
        if self.as_annotation and "routing" not in self.as_annotation:
            raise ConfigError("as_annotation needs a routing snapshot")
        if not 0 < self.alias["q"] <= self.alias["k"]:
            raise ConfigError("alias: need 0 < q <= k")
        if not 0 < self.coverage_target <= 1:
            raise ConfigError("coverage_target must be in (0, 1]")
        names = [g.name for g in self.generators]
        if len(names) != len(set(names)):
            raise ConfigError("generator names must be unique")
        existing = self.output
        while not existing.exists():
            existing = existing.parent
        if not existing.is_dir() or not os.access(existing, os.W_OK):
            raise ConfigError(f"output directory not writable: {self.output}")


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _parse_specs(items) -> list[ProtocolSpec]:
    out: list[ProtocolSpec] = []
    for item in items:
        try:
            chosen = specs_for(item.upper()) if ":" not in item else (ProtocolSpec.parse(item),)
        except (ValueError, KeyError):
            raise ConfigError(f"unknown protocol spec {item!r}") from None
        out.extend(s for s in chosen if s not in out)
    return sorted(out)

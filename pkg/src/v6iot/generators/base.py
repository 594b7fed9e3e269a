"""Estimator plumbing shared by the target generators.

Generators follow the scikit-learn estimator contract: hyper-parameters are
constructor arguments (so ``get_params``/``set_params``/``clone`` work),
``fit`` learns from a seed set and returns ``self``, learned state carries a
trailing underscore, and ``generate`` produces a :class:`Scanlist`.
"""
from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..addresses import MAX_ADDR, format_address, parse_address
from ..model import SourceKind, SourceTag


class Technique(str, enum.Enum):
    DensityFillUp = "DensityFillUp"
    EntropyModel = "EntropyModel"
    ActivePartition = "ActivePartition"
    ExternalImport = "ExternalImport"
    UniformRandom = "UniformRandom"


class InsufficientSeeds(ValueError):
    pass


@dataclass
class GeneratorRun:
    name: str
    technique: Technique
    seed_source: SourceKind | None
    budget: int | None
    rng_seed: int | None
    emitted_count: int = 0

    @property
    def tag(self) -> SourceTag:
        return SourceTag.generator(self.name, self.seed_source)

    def to_json(self) -> dict:
        return {"name": self.name, "technique": self.technique.value,
                "seed_source": self.seed_source.value if self.seed_source else None,
                "budget": self.budget, "rng_seed": self.rng_seed,
                "emitted_count": self.emitted_count}

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorRun":
        src = obj.get("seed_source")
        return cls(obj["name"], Technique(obj["technique"]), SourceKind(src) if src else None,
                   obj.get("budget"), obj.get("rng_seed"), obj.get("emitted_count", 0))


@dataclass
class Scanlist:
    run: GeneratorRun
    addresses: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.addresses)

    def __iter__(self):
        return iter(self.addresses)

    def write(self, path, provenance_path=None) -> None:
        from ..io import write_jsonl

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for a in self.addresses:
                fh.write(format_address(a) + "\n")
        if provenance_path is not None:
            tag = str(self.run.tag)
            write_jsonl(provenance_path, ({"address": format_address(a), "origins": [tag], "run": self.run.name}
                                          for a in self.addresses))


def check_addresses(X, *, min_count: int = 0, name: str = "seeds") -> np.ndarray:
    """Validate and canonicalise an address collection.

    Accepts text literals, ints, ``ipaddress.IPv6Address`` objects or
    anything iterable over those (including a SeedList). Returns a sorted,
    de-duplicated object array of Python ints.
    """
    if hasattr(X, "addresses") and callable(X.addresses):
        X = X.addresses()
    values = set()
    for item in X:
        if isinstance(item, ipaddress.IPv6Address):
            values.add(int(item))
        elif isinstance(item, (int, np.integer)):
            v = int(item)
            if not 0 <= v <= MAX_ADDR:
                raise ValueError(f"address out of range: {v}")
            values.add(v)
        elif isinstance(item, str):
            values.add(parse_address(item))
        else:
            raise TypeError(f"cannot interpret {type(item).__name__} as an IPv6 address")
    if len(values) < min_count:
        raise InsufficientSeeds(f"{name}: need at least {min_count} distinct addresses, got {len(values)}")
    out = np.empty(len(values), dtype=object)
    out[:] = sorted(values)
    return out


def nybble_matrix(addrs: Iterable[int]) -> np.ndarray:
    """(n, 32) uint8 matrix of nybbles, most significant first."""
    addrs = list(addrs)
    mat = np.empty((len(addrs), 32), dtype=np.uint8)
    for row, a in enumerate(addrs):
        hexed = f"{a:032x}"
        mat[row] = np.frombuffer(hexed.encode(), dtype=np.uint8)
    # ascii hex -> value
    digits = mat >= ord("a")
    mat = np.where(digits, mat - ord("a") + 10, mat - ord("0")).astype(np.uint8)
    return mat


def rows_to_addresses(mat: np.ndarray) -> list[int]:
    table = np.frombuffer(b"0123456789abcdef", dtype=np.uint8)
    return [int(row.tobytes().decode(), 16) for row in table[mat]]


class BaseGenerator(BaseEstimator):
    """Common ``fit``/``generate`` surface."""

    technique: Technique
    min_seeds = 0

    def _run(self, emitted: int) -> GeneratorRun:
        return GeneratorRun(
            name=getattr(self, "name", None) or type(self).__name__,
            technique=self.technique,
            seed_source=SourceKind(self.seed_source) if getattr(self, "seed_source", None) else None,
            budget=getattr(self, "budget", None),
            rng_seed=getattr(self, "rng_seed", None),
            emitted_count=emitted,
        )

    def fit(self, X, y=None):
        seeds = check_addresses(X, min_count=self.min_seeds)
        self.seeds_ = seeds
        self.seed_set_ = set(seeds.tolist())
        self.n_seeds_ = len(seeds)
        self._fit(seeds)
        return self

    def _fit(self, seeds: np.ndarray) -> None:
        pass

    def generate(self) -> Scanlist:
        check_is_fitted(self, "seeds_")
        addrs = self._generate()
        return Scanlist(self._run(len(addrs)), addrs)

    def fit_generate(self, X, y=None) -> Scanlist:
        return self.fit(X).generate()

    def _generate(self) -> list[int]:
        raise NotImplementedError

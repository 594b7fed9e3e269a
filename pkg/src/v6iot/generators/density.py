"""High-density region fill-up over nybble patterns."""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

from ..addresses import NYBBLES, nybble_mask
from .base import BaseGenerator, Technique


@dataclass(frozen=True)
class Region:
    """Nybble pattern: fixed nybbles in ``base``, free nybbles at ``wildcards``."""

    base: int
    wildcards: tuple[int, ...]
    seed_count: int = field(compare=False, default=0)

    @property
    def size(self) -> int:
        return 16 ** len(self.wildcards)

    @property
    def density(self) -> float:
        return self.seed_count / self.size

    def contains(self, addr: int) -> bool:
        return addr & ~nybble_mask(self.wildcards) == self.base

    def enumerate(self):
        shifts = [4 * (NYBBLES - 1 - p) for p in self.wildcards]
        for digits in itertools.product(range(16), repeat=len(shifts)):
            value = self.base
            for d, s in zip(digits, shifts):
                value |= d << s
            yield value

    def pattern(self) -> str:
        hexed = f"{self.base:032x}"
        return "".join("*" if i in self.wildcards else c for i, c in enumerate(hexed))


def find_regions(seeds, min_density: float, max_wildcards: int) -> list[Region]:
    """All nybble patterns with up to ``max_wildcards`` free positions that
    hold at least two seeds at density >= ``min_density``, densest first."""
    regions = []
    full = (1 << 128) - 1
    for w in range(1, max_wildcards + 1):
        size = 16 ** w
        need = max(2, -(-min_density * size // 1))
        if need > len(seeds):
            break
        for positions in itertools.combinations(range(NYBBLES), w):
            keep = full & ~nybble_mask(positions)
            counts = Counter(a & keep for a in seeds)
            for base, c in counts.items():
                if c >= need and c / size >= min_density:
                    regions.append(Region(base, positions, c))
    regions.sort(key=lambda r: (-r.density, -r.seed_count, len(r.wildcards), r.wildcards, r.base))
    return regions


class DensityFillUpGenerator(BaseGenerator):
    """Fill up densely seeded nybble regions, densest first.

    Parameters
    ----------
    budget : int
        Maximum number of addresses to emit.
    min_density : float
        Minimum seeds-per-region-size for a region to be enumerated.
    max_wildcards : int
        Largest number of free nybbles a region may have.
    """

    technique = Technique.DensityFillUp

    def __init__(self, budget: int = 10000, min_density: float = 1 / 16, max_wildcards: int = 2,
                 name: str = "density-fillup", seed_source=None, rng_seed=0):
        self.budget = budget
        self.min_density = min_density
        self.max_wildcards = max_wildcards
        self.name = name
        self.seed_source = seed_source
        self.rng_seed = rng_seed

    def _fit(self, seeds):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if not 0 < self.min_density <= 1:
            raise ValueError("min_density must be in (0, 1]")
        self.regions_ = find_regions(seeds.tolist(), self.min_density, self.max_wildcards) if len(seeds) >= 2 else []

    def _generate(self) -> list[int]:
        out: list[int] = []
        if self.budget == 0:
            return out
        emitted = set()
        for region in self.regions_:
            for addr in region.enumerate():
                if addr in self.seed_set_ or addr in emitted:
                    continue
                emitted.add(addr)
                out.append(addr)
                if len(out) >= self.budget:
                    return out
        return out


def density_fillup_generate(seeds, budget: int, min_density: float = 1 / 16, rng_seed=0, **kw):
    return DensityFillUpGenerator(budget=budget, min_density=min_density, rng_seed=rng_seed, **kw).fit_generate(seeds)

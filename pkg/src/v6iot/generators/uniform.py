"""Uniform random sampling inside a prefix; the no-structure baseline."""
from __future__ import annotations

import random

from ..addresses import Prefix
from .base import BaseGenerator, Technique


class UniformRandomGenerator(BaseGenerator):
    technique = Technique.UniformRandom

    def __init__(self, budget: int = 10000, prefix: str = "::/0", rng_seed=0,
                 name: str = "uniform-random", seed_source=None):
        self.budget = budget
        self.prefix = prefix
        self.rng_seed = rng_seed
        self.name = name
        self.seed_source = seed_source

    def _generate(self) -> list[int]:
        prefix = Prefix.parse(self.prefix)
        rng = random.Random(self.rng_seed)
        host_bits = 128 - prefix.length
        want = min(self.budget, prefix.size - len(self.seed_set_))
        seen = set(self.seed_set_)
        out = []
        while len(out) < want:
            addr = prefix.base | rng.getrandbits(host_bits) if host_bits else prefix.base
            if addr not in seen:
                seen.add(addr)
                out.append(addr)
        return out

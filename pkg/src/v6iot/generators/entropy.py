"""Per-nybble entropy model: independent categorical distribution per position."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .base import BaseGenerator, Technique, nybble_matrix, rows_to_addresses


class EntropyModelGenerator(BaseGenerator):
    technique = Technique.EntropyModel
    min_seeds = 32

    def __init__(self, budget: int = 10000, rng_seed=0, max_draw_factor: int = 50, batch_size: int = 4096,
                 name: str = "entropy-model", seed_source=None):
        self.budget = budget
        self.rng_seed = rng_seed
        self.max_draw_factor = max_draw_factor
        self.batch_size = batch_size
        self.name = name
        self.seed_source = seed_source

    def _fit(self, seeds):
        mat = nybble_matrix(seeds.tolist())
        counts = np.zeros((32, 16), dtype=np.int64)
        for pos in range(32):
            counts[pos] = np.bincount(mat[:, pos], minlength=16)
        self.counts_ = counts
        self.probabilities_ = counts / counts.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(self.probabilities_ > 0, np.log2(self.probabilities_), 0.0)
        self.entropy_ = -(self.probabilities_ * logs).sum(axis=1)

    def sample_nybbles(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Raw model draws, (n, 32) nybbles, without de-duplication."""
        check_is_fitted(self, "probabilities_")
        out = np.empty((n, 32), dtype=np.uint8)
        for pos in range(32):
            p = self.probabilities_[pos]
            nz = np.flatnonzero(p)
            if len(nz) == 1:
                out[:, pos] = nz[0]
            else:
                out[:, pos] = rng.choice(16, size=n, p=p)
        return out

    def _generate(self) -> list[int]:
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        rng = np.random.default_rng(self.rng_seed)
        out: list[int] = []
        seen = set(self.seed_set_)
        max_draws = self.max_draw_factor * self.budget + 1024
        drawn = 0
        while len(out) < self.budget and drawn < max_draws:
            n = min(self.batch_size, max_draws - drawn)
            drawn += n
            for addr in rows_to_addresses(self.sample_nybbles(n, rng)):
                if addr not in seen:
                    seen.add(addr)
                    out.append(addr)
                    if len(out) >= self.budget:
                        break
        return out


def entropy_generate(seeds, budget: int, rng_seed=0, **kw):
    return EntropyModelGenerator(budget=budget, rng_seed=rng_seed, **kw).fit_generate(seeds)

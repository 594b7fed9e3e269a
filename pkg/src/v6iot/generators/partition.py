"""Active hierarchical partitioning with success-rate feedback.

Seeds are split recursively on the nybble with the highest entropy (lowest
position on ties). Leaves are probe regions whose free nybbles are the
positions where their seeds disagree. Each step spreads a probe budget over
open leaves in proportion to the smoothed success rate (hits+1)/(probes+2).
"""
from __future__ import annotations

import copy
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from sklearn.utils.validation import check_is_fitted

from ..addresses import NYBBLES, nybble_at, nybble_mask
from .base import BaseGenerator, Scanlist, Technique

ENUMERATE_LIMIT = 1 << 12


def _entropy(values: Iterable[int]) -> float:
    counts = Counter(values)
    n = sum(counts.values())
    return -sum(c / n * math.log2(c / n) for c in counts.values())


@dataclass
class RegionNode:
    node_id: str
    base: int
    wildcards: tuple[int, ...]
    seeds: list[int]
    children: list["RegionNode"] = field(default_factory=list)
    split_position: int | None = None
    hits: int = 0
    probes: int = 0
    closed: bool = False
    probed: set[int] = field(default_factory=set, repr=False)
    _pending: list[int] | None = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return 16 ** len(self.wildcards)

    @property
    def density(self) -> float:
        return len(self.seeds) / self.size

    @property
    def weight(self) -> Fraction:
        return Fraction(self.hits + 1, self.probes + 2)

    def contains(self, addr: int) -> bool:
        return addr & ~nybble_mask(self.wildcards) == self.base

    def leaves(self) -> list["RegionNode"]:
        if self.is_leaf:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def available(self, seed_set: set[int]) -> int:
        """Upper bound on what this leaf can still emit."""
        if self.closed:
            return 0
        if self._pending is not None:
            return len(self._pending)
        return self.size - len(self.probed) - len(self.seeds)

    def draw(self, n: int, rng: random.Random, seed_set: set[int]) -> list[int]:
        if self.closed or n <= 0:
            return []
        shifts = [4 * (NYBBLES - 1 - p) for p in self.wildcards]
        if self.size <= ENUMERATE_LIMIT:
            if self._pending is None:
                pending = []
                for k in range(self.size):
                    addr = self.base
                    for j, s in enumerate(reversed(shifts)):
                        addr |= ((k >> (4 * j)) & 0xF) << s
                    if addr not in seed_set and addr not in self.probed:
                        pending.append(addr)
                rng.shuffle(pending)
                self._pending = pending
            out = self._pending[:n]
            del self._pending[:n]
        else:
            out = []
            tries = 0
            while len(out) < n and tries < 64 * n:
                tries += 1
                addr = self.base
                for s in shifts:
                    addr |= rng.randrange(16) << s
                if addr in seed_set or addr in self.probed:
                    continue
                self.probed.add(addr)
                out.append(addr)
        self.probed.update(out)
        self.probes += len(out)
        if self._pending is not None and not self._pending:
            self.closed = True
        return out


def build_tree(seeds: Iterable[int], leaf_size: int = 16) -> RegionNode:
    seeds = sorted(set(seeds))
    if not seeds:
        raise ValueError("cannot partition an empty seed set")
    return _build(seeds, "r", leaf_size)


def _varying(seeds: list[int]) -> list[int]:
    first = seeds[0]
    diff = 0
    for s in seeds[1:]:
        diff |= s ^ first
    return [p for p in range(NYBBLES) if (diff >> (4 * (NYBBLES - 1 - p))) & 0xF]


def _build(seeds: list[int], node_id: str, leaf_size: int) -> RegionNode:
    varying = _varying(seeds)
    if len(seeds) <= leaf_size or not varying:
        wildcards = tuple(varying) if varying else (NYBBLES - 1,)
        base = seeds[0] & ~nybble_mask(wildcards) & ((1 << 128) - 1)
        return RegionNode(node_id, base, wildcards, seeds)
    # highest entropy, lowest position on ties
    split = max(varying, key=lambda p: (_entropy(nybble_at(s, p) for s in seeds), -p))
    groups: dict[int, list[int]] = {}
    for s in seeds:
        groups.setdefault(nybble_at(s, split), []).append(s)
    node = RegionNode(node_id, seeds[0] & ~nybble_mask(varying) & ((1 << 128) - 1), tuple(varying), seeds,
                      split_position=split)
    node.children = [_build(groups[v], f"{node_id}.{split}:{v:x}", leaf_size) for v in sorted(groups)]
    return node


def allocate(weights: Mapping[str, Fraction], budget: int, capacity: Mapping[str, int] | None = None) -> dict[str, int]:
    """Split ``budget`` proportionally to ``weights`` (largest remainder).

    Leaves that cannot absorb their share hand the rest to the others.
    Ties on remainders go to the earlier key.
    """
    alloc = {k: 0 for k in weights}
    remaining = budget
    active = [k for k in weights if capacity is None or capacity[k] > 0]
    while remaining > 0 and active:
        total = sum(weights[k] for k in active)
        quotas = {k: remaining * weights[k] / total for k in active}
        share = {k: math.floor(q) for k, q in quotas.items()}
        left = remaining - sum(share.values())
        order = sorted(active, key=lambda k: (-(quotas[k] - share[k]), active.index(k)))
        for k in order[:left]:
            share[k] += 1
        spent = 0
        saturated = []
        for k in active:
            room = math.inf if capacity is None else capacity[k] - alloc[k]
            take = min(share[k], room)
            alloc[k] += take
            spent += take
            if take < share[k] or (capacity is not None and alloc[k] >= capacity[k]):
                saturated.append(k)
        remaining -= spent
        if not saturated:
            break
        active = [k for k in active if k not in saturated]
    return alloc


class PartitionTree:
    def __init__(self, root: RegionNode, seed_set: set[int], rng_seed=0):
        self.root = root
        self.seed_set = seed_set
        self.rng = random.Random(rng_seed)
        self.rounds = 0

    @classmethod
    def from_seeds(cls, seeds: Iterable[int], leaf_size: int = 16, rng_seed=0) -> "PartitionTree":
        seeds = sorted(set(seeds))
        return cls(build_tree(seeds, leaf_size), set(seeds), rng_seed)

    def leaves(self) -> list[RegionNode]:
        return self.root.leaves()

    def leaf(self, node_id: str) -> RegionNode:
        for leaf in self.leaves():
            if leaf.node_id == node_id:
                return leaf
        raise KeyError(node_id)

    def leaf_for(self, addr: int) -> RegionNode | None:
        for leaf in self.leaves():
            if leaf.contains(addr):
                return leaf
        return None

    def apply_feedback(self, feedback: Mapping[str, int | tuple[int, int]]) -> None:
        """``feedback`` maps leaf id to hits among already-emitted probes, or to
        ``(hits, probes)`` for probes sent outside this tree."""
        for node_id, value in feedback.items():
            leaf = self.leaf(node_id)
            if isinstance(value, tuple):
                hits, probes = value
                leaf.probes += probes
            else:
                hits = value
            leaf.hits += hits
            if leaf.hits > leaf.probes:
                raise ValueError(f"{node_id}: more hits ({leaf.hits}) than probes ({leaf.probes})")

    def weights(self) -> dict[str, Fraction]:
        return {leaf.node_id: leaf.weight for leaf in self.leaves() if not leaf.closed}

    def step(self, step_budget: int, feedback: Mapping | None = None) -> list[int]:
        if step_budget < 0:
            raise ValueError("step_budget must be non-negative")
        if feedback:
            self.apply_feedback(feedback)
        if step_budget == 0:
            return []
        leaves = {leaf.node_id: leaf for leaf in self.leaves() if not leaf.closed}
        weights = {k: leaf.weight for k, leaf in leaves.items()}
        capacity = {k: leaf.available(self.seed_set) for k, leaf in leaves.items()}
        alloc = allocate(weights, step_budget, capacity)
        out = []
        for node_id, n in alloc.items():
            out.extend(leaves[node_id].draw(n, self.rng, self.seed_set))
        self.rounds += 1
        return out

    def hits_by_leaf(self, emitted: Iterable[int], responsive: set[int]) -> dict[str, int]:
        hits: dict[str, int] = {}
        for addr in emitted:
            if addr in responsive:
                leaf = self.leaf_for(addr)
                if leaf is not None:
                    hits[leaf.node_id] = hits.get(leaf.node_id, 0) + 1
        return hits


def active_partition_step(tree: PartitionTree, feedback: Mapping | None, step_budget: int) -> tuple[list[int], PartitionTree]:
    """Functional form: the input tree is left untouched."""
    updated = copy.deepcopy(tree)
    return updated.step(step_budget, feedback), updated


class ActivePartitionGenerator(BaseGenerator):
    technique = Technique.ActivePartition

    def __init__(self, budget: int = 10000, step_budget: int = 1000, leaf_size: int = 16,
                 name: str = "active-partition", seed_source=None, rng_seed=0):
        self.budget = budget
        self.step_budget = step_budget
        self.leaf_size = leaf_size
        self.name = name
        self.seed_source = seed_source
        self.rng_seed = rng_seed

    def _fit(self, seeds):
        if len(seeds) == 0:
            raise ValueError("no seeds")
        self.tree_ = PartitionTree.from_seeds(seeds.tolist(), self.leaf_size, self.rng_seed)

    def generate(self, feedback_fn: Callable[[list[int]], set[int]] | None = None) -> Scanlist:
        """Run feedback rounds until the budget is spent or every leaf is closed.

        ``feedback_fn`` probes a batch and returns the responsive subset;
        without it the tree explores with uniform weights.
        """
        check_is_fitted(self, "tree_")
        out: list[int] = []
        feedback: dict[str, int] = {}
        while len(out) < self.budget:
            n = min(self.step_budget, self.budget - len(out))
            batch = self.tree_.step(n, feedback)
            if not batch:
                break
            out.extend(batch)
            feedback = self.tree_.hits_by_leaf(batch, feedback_fn(batch)) if feedback_fn else {}
        if feedback:
            self.tree_.apply_feedback(feedback)
        return Scanlist(self._run(len(out)), out)

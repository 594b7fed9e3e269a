"""Blocklist lookup over a binary radix tree and Bloom-filter deduplication."""
from __future__ import annotations

import enum
import hashlib
import math
import threading
from typing import Generic, Iterable, Iterator, TypeVar

from .addresses import ADDR_BITS, MalformedAddress, Prefix
from .io import iter_lines

V = TypeVar("V")
_EMPTY = object()


class PrefixTree(Generic[V]):
    """Binary trie keyed on address bits, MSB first.

    Each node is ``[zero_child, one_child, value]``; ``value`` is a sentinel
    when no prefix ends at that node.
    """

    def __init__(self):
        self._root: list = [None, None, _EMPTY]
        self._count = 0

    def insert(self, prefix: Prefix, value: V) -> None:
        node = self._root
        for depth in range(prefix.length):
            bit = (prefix.base >> (ADDR_BITS - 1 - depth)) & 1
            if node[bit] is None:
                node[bit] = [None, None, _EMPTY]
            node = node[bit]
        if node[2] is _EMPTY:
            self._count += 1
        node[2] = value

    def longest_match(self, addr: int) -> tuple[Prefix, V] | None:
        node = self._root
        best = None
        if node[2] is not _EMPTY:
            best = (0, node[2])
        for depth in range(ADDR_BITS):
            node = node[(addr >> (ADDR_BITS - 1 - depth)) & 1]
            if node is None:
                break
            if node[2] is not _EMPTY:
                best = (depth + 1, node[2])
        if best is None:
            return None
        length, value = best
        return Prefix.enclosing(addr, length), value

    def items(self) -> Iterator[tuple[Prefix, V]]:
        stack = [(self._root, 0, 0)]
        while stack:
            node, base, depth = stack.pop()
            if node[2] is not _EMPTY:
                yield Prefix(base, depth), node[2]
            for bit in (1, 0):
                child = node[bit]
                if child is not None:
                    stack.append((child, base | (bit << (ADDR_BITS - 1 - depth)), depth + 1))

    def __len__(self):
        return self._count


class CidrSet:
    """Set of prefixes; a covering prefix subsumes everything below it."""

    def __init__(self, prefixes: Iterable[Prefix] = ()):
        self._root: list = [None, None, False]
        self._count = 0
        for p in prefixes:
            self.add(p)

    def add(self, prefix: Prefix) -> None:
        node = self._root
        for depth in range(prefix.length):
            if node[2]:
                return  # already covered
            bit = (prefix.base >> (ADDR_BITS - 1 - depth)) & 1
            if node[bit] is None:
                node[bit] = [None, None, False]
            node = node[bit]
        if node[2]:
            return
        self._count -= _count_terminals(node)
        node[0] = node[1] = None
        node[2] = True
        self._count += 1

    def contains(self, addr: int) -> bool:
        node = self._root
        if node[2]:
            return True
        for depth in range(ADDR_BITS):
            node = node[(addr >> (ADDR_BITS - 1 - depth)) & 1]
            if node is None:
                return False
            if node[2]:
                return True
        return False

    __contains__ = contains

    def prefixes(self) -> list[Prefix]:
        out = []
        stack = [(self._root, 0, 0)]
        while stack:
            node, base, depth = stack.pop()
            if node[2]:
                out.append(Prefix(base, depth))
                continue
            for bit in (0, 1):
                if node[bit] is not None:
                    stack.append((node[bit], base | (bit << (ADDR_BITS - 1 - depth)), depth + 1))
        return sorted(out)

    def __len__(self):
        return self._count


def _count_terminals(node) -> int:
    n, stack = 0, [node]
    while stack:
        cur = stack.pop()
        if cur[2]:
            n += 1
        stack.extend(c for c in cur[:2] if c is not None)
    return n


def load_blocklist(path) -> CidrSet:
    blocked = CidrSet()
    for lineno, line in iter_lines(path):
        text = line if "/" in line else line + "/128"
        try:
            blocked.add(Prefix.parse(text))
        except MalformedAddress as exc:
            raise MalformedAddress(line, lineno, exc.reason) from None
    return blocked


def is_blocked(blocklist: CidrSet, addr: int) -> bool:
    return blocklist.contains(addr)


class Seen(enum.Enum):
    Fresh = "Fresh"
    Duplicate = "Duplicate"


class CapacityExceeded(RuntimeError):
    pass


class DedupFilter:
    """Bloom filter over 128-bit addresses.

    Sized from (capacity, fpr) with the usual optimum
    m = -n ln p / (ln 2)^2, k = (m/n) ln 2; indices come from double hashing
    of a keyed BLAKE2b digest so results do not depend on PYTHONHASHSEED.
    """

    def __init__(self, capacity: int = 10**8, fpr: float = 1e-4, key: bytes = b"v6iot-dedup"):
        if capacity <= 0 or not 0 < fpr < 1:
            raise ValueError("capacity must be positive and 0 < fpr < 1")
        self.capacity = capacity
        self.fpr = fpr
        self.m = math.ceil(-capacity * math.log(fpr) / (math.log(2) ** 2))
        self.k = max(1, round(self.m / capacity * math.log(2)))
        self._bits = bytearray((self.m + 7) // 8)
        self._key = key
        self.count = 0
        self._lock = threading.Lock()

    def _indices(self, addr: int) -> list[int]:
        digest = hashlib.blake2b(addr.to_bytes(18, "big"), digest_size=16, key=self._key).digest()
        h = int.from_bytes(digest, "little")
        m = self.m
        h1, h2 = (h >> 64) % m, (h & 0xFFFFFFFFFFFFFFFF) % m | 1
        out = []
        for _ in range(self.k):
            out.append(h1)
            h1 += h2
            if h1 >= m:
                h1 -= m
        return out

    def _all_set(self, idx: list[int]) -> bool:
        bits = self._bits
        for i in idx:
            if not bits[i >> 3] & (1 << (i & 7)):
                return False
        return True

    def __contains__(self, addr: int) -> bool:
        return self._all_set(self._indices(addr))

    def check_and_insert(self, addr: int) -> Seen:
        idx = self._indices(addr)
        with self._lock:
            if self._all_set(idx):
                return Seen.Duplicate
            if self.count >= self.capacity:
                raise CapacityExceeded(f"filter holds {self.count} entries (capacity {self.capacity})")
            bits = self._bits
            for i in idx:
                bits[i >> 3] |= 1 << (i & 7)
            self.count += 1
            return Seen.Fresh

    @property
    def memory_bytes(self) -> int:
        return len(self._bits)


def check_and_insert(dedup: DedupFilter, addr: int) -> Seen:
    return dedup.check_and_insert(addr)


class RotatingDedupFilter:
    """Recently-seen suppression with two generations of Bloom filters.

    A key counts as seen if it is in the current or the previous generation;
    generations rotate every ``window`` time units, so memory stays bounded
    while anything seen within the last window is still caught.
    """

    def __init__(self, window: float, capacity: int = 10**6, fpr: float = 1e-4):
        self.window = window
        self._capacity, self._fpr = capacity, fpr
        self._current = DedupFilter(capacity, fpr)
        self._previous: DedupFilter | None = None
        self._epoch_start: float | None = None

    def _rotate(self, now: float) -> None:
        if self._epoch_start is None:
            self._epoch_start = now
            return
        elapsed = now - self._epoch_start
        if elapsed >= 2 * self.window:
            self._previous, self._current = None, DedupFilter(self._capacity, self._fpr)
            self._epoch_start = now
        elif elapsed >= self.window:
            self._previous, self._current = self._current, DedupFilter(self._capacity, self._fpr)
            self._epoch_start += self.window

    def check_and_insert(self, key: int, now: float) -> Seen:
        self._rotate(now)
        if self._previous is not None and key in self._previous:
            self._current.check_and_insert(key)
            return Seen.Duplicate
        return self._current.check_and_insert(key)


def dedup_key(addr: int, port: int) -> int:
    """Fold (address, port) into a single filter key."""
    return (addr << 16) | port


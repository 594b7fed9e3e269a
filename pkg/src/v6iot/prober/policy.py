"""Politeness: per-host handshake spacing, a global packet pacer, randomized order.

All times are integer microseconds on a simulated clock. Probe code never
sleeps or checks limits itself; it asks the :class:`Politeness` arbiter for
a send slot before every packet and reports handshake boundaries, and the
:class:`Scheduler` only starts a task once its host is allowed again.
"""
from __future__ import annotations

import heapq
import itertools
import random
import threading
import time
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Hashable, Iterable, Sequence

US = 1_000_000
MINUTE = 60 * US

# simulated campaigns start here so artifacts carry stable timestamps
EPOCH = datetime(2023, 6, 24, tzinfo=timezone.utc)


def iso(t_us: int) -> str:
    return (EPOCH + timedelta(microseconds=t_us)).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class PolitenessPolicy:
    per_host_min_gap_us: int = 15 * MINUTE
    global_rate_cap: int = 100_000  # packets per second
    mqtt_session_max_us: int = 30 * MINUTE
    mqtt_traffic_max: int = 10 * 1024 * 1024
    randomize_order: bool = True
    transport_timeout_us: int = 5 * US
    app_timeout_us: int = 10 * US
    contact: str = "https://scan-info.example/ipv6-iot"

    def __post_init__(self):
        for name in ("per_host_min_gap_us", "global_rate_cap", "mqtt_session_max_us",
                     "mqtt_traffic_max", "transport_timeout_us", "app_timeout_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if US % self.global_rate_cap:
            raise ValueError("global_rate_cap must divide one second into whole microseconds")

    @property
    def packet_interval_us(self) -> int:
        return US // self.global_rate_cap

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PolitenessPolicy":
        return cls(**obj)


class Pacer:
    """Strict packet pacer: one packet per slot of ``interval_us``.

    A packet requested for time t goes out in the first free slot at or
    after t. Slots are distinct multiples of the interval, so any half-open
    window of one second holds at most ``rate`` packets. Reservations may
    land out of order (a long handshake books slots far ahead), hence a set
    rather than a single "next free" cursor.
    """

    def __init__(self, interval_us: int):
        self.interval_us = interval_us
        # booked slot -> a later slot to try next; chains are path-compressed
        self._next: dict[int, int] = {}
        self._floor = 0  # slots below this are in the past and forgotten
        self._last = -1
        self._lock = threading.Lock()
        self.sent = 0

    def _free_from(self, slot: int) -> int:
        nxt = self._next
        root = slot
        while root in nxt:
            root = nxt[root]
        while slot != root:
            nxt[slot], slot = root, nxt[slot]
        return root

    def reserve(self, t_us: int) -> int:
        with self._lock:
            slot = self._free_from(max(-(-t_us // self.interval_us), self._floor))
            self._next[slot] = slot + 1
            self._last = max(self._last, slot)
            self.sent += 1
            return slot * self.interval_us

    def forget_before(self, t_us: int) -> None:
        """Drop bookkeeping for slots that can no longer be requested."""
        floor = t_us // self.interval_us
        with self._lock:
            if floor <= self._floor:
                return
            self._floor = floor
            if len(self._next) > 4096:
                self._next = {s: n for s, n in self._next.items() if s >= floor}

    @property
    def horizon_us(self) -> int:
        with self._lock:
            last = max(self._last, self._floor - 1)
        return (last + 1) * self.interval_us


class Politeness:
    """Single arbiter for the per-host map and the pacer."""

    def __init__(self, policy: PolitenessPolicy, now_us: int = 0):
        self.policy = policy
        self.pacer = Pacer(policy.packet_interval_us)
        self.pacer._floor = -(-now_us // policy.packet_interval_us)
        self.host_free_at: dict[Hashable, int] = {}
        self._busy: set[Hashable] = set()
        self._lock = threading.Lock()
        self.now_us = now_us
        # real-network runs set this to block until a simulated instant arrives
        self.wait: Callable[[int], None] | None = None

    def host_ready_at(self, host) -> int:
        with self._lock:
            return self.host_free_at.get(host, 0)

    def begin(self, host) -> None:
        with self._lock:
            if host in self._busy:
                raise RuntimeError(f"overlapping handshakes to {host!r}")
            self._busy.add(host)

    def end(self, host, end_us: int) -> None:
        with self._lock:
            self._busy.discard(host)
            self.host_free_at[host] = max(self.host_free_at.get(host, 0),
                                          end_us + self.policy.per_host_min_gap_us)

    def send_slot(self, t_us: int) -> int:
        slot = self.pacer.reserve(t_us)
        if self.wait is not None:
            self.wait(slot)
        return slot

    def advance(self, t_us: int) -> None:
        if t_us > self.now_us:
            self.now_us = t_us
            self.pacer.forget_before(t_us)

    def to_json(self) -> dict:
        from ..addresses import format_address

        hosts = {format_address(h) if isinstance(h, int) else str(h): t
                 for h, t in self.host_free_at.items()}
        return {"clock_us": max(self.now_us, self.pacer.horizon_us),
                "host_free_at": dict(sorted(hosts.items())),
                "policy": self.policy.to_json()}

    @classmethod
    def from_json(cls, obj: dict, policy: PolitenessPolicy | None = None) -> "Politeness":
        from ..addresses import parse_address

        state = cls(policy or PolitenessPolicy.from_json(obj["policy"]), obj["clock_us"])
        state.host_free_at = {parse_address(h): t for h, t in obj["host_free_at"].items()}
        return state


@dataclass(frozen=True)
class HandshakeEvent:
    host: int
    port: int
    purpose: str
    start_us: int
    end_us: int
    packets: tuple[int, ...]  # send times

    def to_json(self) -> dict:
        from ..addresses import format_address

        return {"host": format_address(self.host), "port": self.port, "purpose": self.purpose,
                "start": iso(self.start_us), "start_us": self.start_us, "end_us": self.end_us,
                "packet_offsets_us": [t - self.start_us for t in self.packets]}

    @classmethod
    def from_json(cls, obj: dict) -> "HandshakeEvent":
        from ..addresses import parse_address

        start = obj["start_us"]
        return cls(parse_address(obj["host"]), obj["port"], obj["purpose"], start, obj["end_us"],
                   tuple(start + d for d in obj["packet_offsets_us"]))


@dataclass
class TaskResult:
    end_us: int
    follow_ups: list["Task"] = field(default_factory=list)


@dataclass
class Task:
    host: int
    port: int
    purpose: str
    action: Callable[[int], TaskResult]


class Scheduler:
    """Runs tasks in simulated time under the politeness arbiter.

    Ready tasks are started in order of their earliest allowed start; a
    task whose host is still inside its gap is pushed back to the moment the
    host frees up. Follow-up tasks returned by an action become ready once
    the host gap has elapsed.
    """

    def __init__(self, politeness: Politeness):
        self.politeness = politeness
        self._heap: list[tuple[int, int, Task]] = []
        self._seq = itertools.count()

    def submit(self, task: Task, ready_us: int | None = None) -> None:
        if ready_us is None:
            ready_us = self.politeness.now_us
        heapq.heappush(self._heap, (ready_us, next(self._seq), task))

    def submit_all(self, tasks: Iterable[Task]) -> None:
        for t in tasks:
            self.submit(t)

    def run(self) -> None:
        pol = self.politeness
        while self._heap:
            ready, seq, task = heapq.heappop(self._heap)
            free = pol.host_ready_at(task.host)
            if free > ready:
                heapq.heappush(self._heap, (free, seq, task))
                continue
            pol.advance(ready)
            if pol.wait is not None:
                pol.wait(ready)
            result = task.action(ready)
            for follow in result.follow_ups:
                self.submit(follow, pol.host_ready_at(follow.host))


class WallClock:
    """Maps the simulated clock onto real time for socket campaigns."""

    def __init__(self, origin_us: int = 0, sleep: Callable[[float], None] | None = None):
        self._monotonic = time.monotonic
        self._sleep = sleep or time.sleep
        self.origin_us = origin_us
        self.t0 = self._monotonic()

    def __call__(self, t_us: int) -> None:
        delay = (t_us - self.origin_us) / US - (self._monotonic() - self.t0)
        if delay > 0:
            self._sleep(delay)


@dataclass(frozen=True)
class PlannedProbe:
    seq: int
    at_us: int
    target: tuple


def schedule_batch(targets: Sequence[tuple], policy: PolitenessPolicy,
                   clock_us: int = 0, rng_seed=None) -> list[PlannedProbe]:
    """Emission plan: a seeded permutation with per-host spacing and paced starts.

    Targets are tuples whose first element is the host address. Each planned
    start is one handshake initiation consuming one pacer slot; the host
    becomes eligible again ``per_host_min_gap`` after its previous start.
    """
    order = list(targets)
    if policy.randomize_order:
        random.Random(rng_seed).shuffle(order)
    # per-host FIFO, hosts served in order of first appearance in the permutation
    queues: dict[int, deque] = defaultdict(deque)
    for idx, target in enumerate(order):
        queues[target[0]].append(idx)
    state = Politeness(policy, clock_us)
    heap = [(clock_us, q[0], host) for host, q in queues.items()]
    heapq.heapify(heap)
    plan = []
    while heap:
        ready, idx, host = heapq.heappop(heap)
        start = state.send_slot(ready)
        state.advance(ready)
        plan.append(PlannedProbe(idx, start, order[idx]))
        q = queues[host]
        q.popleft()
        if q:
            heapq.heappush(heap, (start + policy.per_host_min_gap_us, q[0], host))
    plan.sort(key=lambda p: (p.at_us, p.seq))
    return plan


@dataclass
class AuditReport:
    handshakes: int
    packets: int
    min_host_gap_us: int | None
    gap_violations: int
    peak_packets_per_s: int
    rate_violations: int

    @property
    def ok(self) -> bool:
        return self.gap_violations == 0 and self.rate_violations == 0


def peak_window_count(times: Iterable[int], window_us: int = US) -> int:
    """Largest number of events in any half-open window [t, t + window)."""
    ts = sorted(times)
    best, lo = 0, 0
    for hi, t in enumerate(ts):
        while ts[lo] <= t - window_us:
            lo += 1
        best = max(best, hi - lo + 1)
    return best


def audit(events: Sequence[HandshakeEvent], policy: PolitenessPolicy) -> AuditReport:
    """Check a handshake log against the policy, independently of the scheduler."""
    by_host: dict[int, list[HandshakeEvent]] = defaultdict(list)
    for ev in events:
        by_host[ev.host].append(ev)
    min_gap, violations = None, 0
    for evs in by_host.values():
        evs.sort(key=lambda e: e.start_us)
        for prev, cur in zip(evs, evs[1:]):
            gap = cur.start_us - prev.start_us
            min_gap = gap if min_gap is None else min(min_gap, gap)
            if gap < policy.per_host_min_gap_us or cur.start_us < prev.end_us:
                violations += 1
    times = [t for ev in events for t in ev.packets]
    peak = peak_window_count(times)
    return AuditReport(len(events), len(times), min_gap, violations, peak,
                       int(peak > policy.global_rate_cap))

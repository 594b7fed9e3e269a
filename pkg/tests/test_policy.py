import pytest
from hypothesis import given, settings, strategies as st

from v6iot.prober.policy import (MINUTE, US, HandshakeEvent, Pacer, Politeness, PolitenessPolicy, Scheduler, Task,
                                 TaskResult, WallClock, audit, iso, peak_window_count, schedule_batch)


def test_policy_defaults_and_validation():
    p = PolitenessPolicy()
    assert p.per_host_min_gap_us == 15 * MINUTE and p.global_rate_cap == 100_000
    assert p.packet_interval_us == 10
    assert PolitenessPolicy.from_json(p.to_json()) == p
    with pytest.raises(ValueError):
        PolitenessPolicy(global_rate_cap=0)
    with pytest.raises(ValueError):
        PolitenessPolicy(global_rate_cap=300_000)


def test_iso_timestamps_start_at_epoch():
    assert iso(0) == "2023-06-24T00:00:00.000000Z"
    assert iso(90 * US) == "2023-06-24T00:01:30.000000Z"


@settings(max_examples=60)
@given(st.lists(st.integers(0, 5000), min_size=1, max_size=300))
def test_pacer_slots_distinct_and_not_early(requests):
    pacer = Pacer(10)
    got = [pacer.reserve(t) for t in requests]
    assert len(set(got)) == len(got)
    assert all(g >= t and g % 10 == 0 for g, t in zip(got, requests))
    assert peak_window_count(got, 100) <= 10


def test_pacer_fills_holes_left_by_future_bookings():
    pacer = Pacer(10)
    assert pacer.reserve(1000) == 1000
    assert pacer.reserve(0) == 0
    assert pacer.reserve(0) == 10
    assert pacer.reserve(1000) == 1010


def test_peak_window_half_open():
    assert peak_window_count([0, US - 1, US]) == 2
    assert peak_window_count([]) == 0


def _task(host, log, duration=1000):
    def action(start):
        log.append((host, start))
        return TaskResult(start + duration)
    return Task(host, 1883, "t", action)


def test_scheduler_spaces_same_host():
    pol = Politeness(PolitenessPolicy())
    log = []

    def action(start):
        log.append(start)
        pol.end(1, start + 5 * US)
        return TaskResult(start + 5 * US)

    sched = Scheduler(pol)
    sched.submit_all([Task(1, 1883, "a", action), Task(1, 8883, "b", action), Task(1, 1883, "c", action)])
    sched.run()
    assert log == [0, 5 * US + 15 * MINUTE, 10 * US + 30 * MINUTE]


def test_scheduler_follow_up_waits_for_gap():
    pol = Politeness(PolitenessPolicy())
    starts = []

    def second(start):
        starts.append(start)
        return TaskResult(start + 1)

    def first(start):
        starts.append(start)
        pol.end(9, start + 100)
        return TaskResult(start + 100, [Task(9, 8883, "fallback", second)])

    sched = Scheduler(pol)
    sched.submit(Task(9, 1883, "probe", first))
    sched.run()
    assert starts == [0, 100 + 15 * MINUTE]


def test_overlapping_handshakes_rejected():
    pol = Politeness(PolitenessPolicy())
    pol.begin(1)
    with pytest.raises(RuntimeError):
        pol.begin(1)
    pol.end(1, 10)
    pol.begin(1)


def test_politeness_state_round_trip():
    pol = Politeness(PolitenessPolicy())
    pol.end(0x20010DB8 << 96, 123)
    pol.send_slot(500)
    state = Politeness.from_json(pol.to_json())
    assert state.host_free_at == pol.host_free_at
    assert state.now_us >= 510
    # a resumed state never hands out a slot in the past
    assert state.send_slot(0) >= 510


def test_schedule_batch_is_permutation_with_gaps():
    targets = [(h, port) for h in range(50) for port in (1883, 8883)]
    plan = schedule_batch(targets, PolitenessPolicy(), rng_seed=3)
    assert sorted(p.target for p in plan) == sorted(targets)
    assert plan == schedule_batch(targets, PolitenessPolicy(), rng_seed=3)
    assert [p.target for p in plan] != [p.target for p in schedule_batch(targets, PolitenessPolicy(), rng_seed=4)]
    by_host = {}
    for p in plan:
        by_host.setdefault(p.target[0], []).append(p.at_us)
    assert all(b - a >= 15 * MINUTE for ts in by_host.values() for a, b in zip(ts, ts[1:]))
    assert peak_window_count([p.at_us for p in plan]) <= 100_000


def test_audit_detects_violations():
    policy = PolitenessPolicy()
    ok = [HandshakeEvent(1, 1883, "scan", 0, 10, (0,)), HandshakeEvent(1, 8883, "scan", 15 * MINUTE, 15 * MINUTE + 9,
                                                                          (15 * MINUTE,))]
    rep = audit(ok, policy)
    assert rep.ok and rep.min_host_gap_us == 15 * MINUTE
    bad = ok + [HandshakeEvent(1, 1883, "again", 15 * MINUTE + 5, 15 * MINUTE + 6, ())]
    assert audit(bad, policy).gap_violations == 1
    burst = [HandshakeEvent(h, 1883, "scan", 0, 1, (0,) * 3) for h in range(40_000)]
    rep = audit(burst, policy)
    assert rep.peak_packets_per_s == 120_000 and rep.rate_violations == 1


def test_handshake_event_round_trip():
    ev = HandshakeEvent(0x20010DB8 << 96 | 1, 1883, "scan", 70, 900, (70, 80, 410))
    assert HandshakeEvent.from_json(ev.to_json()) == ev


def test_wall_clock_sleeps_until_instant():
    slept = []
    clock = WallClock(origin_us=1_000_000, sleep=slept.append)
    clock._monotonic = lambda: clock.t0 + 0.25
    clock(1_000_000 + 2 * US)
    clock(1_000_000)
    assert slept == [pytest.approx(1.75)]

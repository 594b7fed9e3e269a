import pytest
from hypothesis import given, settings, strategies as st

from v6iot.addresses import MalformedAddress, Prefix, parse_address
from v6iot.blockdedup import (CapacityExceeded, CidrSet, DedupFilter, PrefixTree, RotatingDedupFilter, Seen,
                              dedup_key, load_blocklist)

# prefixes concentrated in a small space so overlaps actually happen
prefixes = st.builds(lambda base, n: Prefix.enclosing(base << 120, n),
                     st.integers(0, 255), st.integers(0, 16))
probes = st.integers(0, (1 << 20) - 1).map(lambda v: v << 108)


@settings(max_examples=200)
@given(st.lists(prefixes, max_size=12), st.lists(probes, max_size=30))
def test_cidr_set_matches_linear_scan(ps, addrs):
    s = CidrSet(ps)
    for a in addrs:
        assert s.contains(a) == any(p.contains(a) for p in ps)


def test_covering_prefix_subsumes():
    s = CidrSet([Prefix.parse("2001:db8:1::/48"), Prefix.parse("2001:db8:2::/48")])
    assert len(s) == 2
    s.add(Prefix.parse("2001:db8::/32"))
    assert len(s) == 1 and s.prefixes() == [Prefix.parse("2001:db8::/32")]
    s.add(Prefix.parse("2001:db8:5::/48"))
    assert len(s) == 1


def test_prefix_tree_longest_match():
    t = PrefixTree()
    t.insert(Prefix.parse("2001:db8::/32"), "wide")
    t.insert(Prefix.parse("2001:db8:1::/48"), "narrow")
    assert t.longest_match(parse_address("2001:db8:1::9"))[1] == "narrow"
    assert t.longest_match(parse_address("2001:db8:2::9"))[1] == "wide"
    assert t.longest_match(parse_address("2001:db9::")) is None


def test_blocklist_file(tmp_path):
    p = tmp_path / "block.txt"
    p.write_text("# opt-outs\n2001:db8::/48\n2001:db8:ffff::7\n")
    s = load_blocklist(p)
    assert parse_address("2001:db8::1234") in s
    assert parse_address("2001:db8:ffff::7") in s
    assert parse_address("2001:db8:ffff::8") not in s
    p.write_text("2001:db8::/48\n2001:db8::/129\n")
    with pytest.raises(MalformedAddress) as info:
        load_blocklist(p)
    assert info.value.position == 2


def test_dedup_fresh_then_duplicate():
    f = DedupFilter(capacity=1000, fpr=1e-4)
    assert f.check_and_insert(42) is Seen.Fresh
    assert f.check_and_insert(42) is Seen.Duplicate
    assert 42 in f and f.count == 1


def test_dedup_capacity():
    f = DedupFilter(capacity=3, fpr=1e-3)
    for a in range(3):
        f.check_and_insert(a)
    with pytest.raises(CapacityExceeded):
        f.check_and_insert(10**30)
    # duplicates never raise
    assert f.check_and_insert(1) is Seen.Duplicate


def test_dedup_sizing_follows_optimum():
    f = DedupFilter(capacity=10**6, fpr=1e-4)
    assert 19_000_000 < f.m < 19_300_000
    assert f.k == 13


def test_rotating_filter_forgets_after_two_windows():
    r = RotatingDedupFilter(window=10, capacity=100)
    key = dedup_key(parse_address("2001:db8::1"), 1883)
    assert r.check_and_insert(key, 0) is Seen.Fresh
    assert r.check_and_insert(key, 5) is Seen.Duplicate
    assert r.check_and_insert(key, 15) is Seen.Duplicate  # still in the previous generation
    assert r.check_and_insert(key + 1, 100) is Seen.Fresh
    assert r.check_and_insert(key, 101) is Seen.Fresh
    assert dedup_key(1, 1883) != dedup_key(1, 8883)

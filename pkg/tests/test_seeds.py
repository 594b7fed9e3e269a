import json

import pytest
from hypothesis import given, strategies as st

from v6iot.addresses import MalformedAddress, parse_address
from v6iot.io import UnreadableFile
from v6iot.model import SourceKind, SourceTag
from v6iot.seeds import (MockResolver, SeedList, derive_from_v4, load_hitlist, load_v4_records,
                         resolve_zone_domains, sample_seeds)


def test_hitlist_skips_comments_and_marks_aliases(tmp_path):
    hl = tmp_path / "hitlist.txt"
    hl.write_text("# header\n2001:db8::1\n\n2001:db8:1::5  # trailing\n2001:db8::1\n")
    al = tmp_path / "aliased.txt"
    al.write_text("2001:db8:1::/48\n")
    seeds = load_hitlist(hl, al)
    assert seeds.addresses() == [parse_address("2001:db8::1"), parse_address("2001:db8:1::5")]
    assert not seeds.entries[parse_address("2001:db8::1")].aliased
    assert seeds.entries[parse_address("2001:db8:1::5")].aliased
    assert seeds.source_manifest[0][0] == SourceTag.seed(SourceKind.TUMHitlist)
    assert load_hitlist(hl, open_list=True).by_source(SourceKind.TUMOpen)


def test_hitlist_malformed_reports_line(tmp_path):
    hl = tmp_path / "bad.txt"
    hl.write_text("2001:db8::1\n# ok\n2001:db8:::2\n")
    with pytest.raises(MalformedAddress) as info:
        load_hitlist(hl)
    assert info.value.position == 3


def test_hitlist_missing_or_empty(tmp_path):
    with pytest.raises(UnreadableFile):
        load_hitlist(tmp_path / "nope.txt")
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert len(load_hitlist(empty)) == 0


def test_zone_resolution_with_www():
    r = MockResolver({"a.example": ["2001:db8::a"], "www.a.example": ["2001:db8::a", "2001:db8::b"]},
                     failing=["broken.example"])
    seeds = resolve_zone_domains(["A.example.", "broken.example", "www.c.example"], r)
    a, b = parse_address("2001:db8::a"), parse_address("2001:db8::b")
    assert seeds.addresses() == [a, b]
    assert {t.kind for t in seeds.entries[a].origins} == {SourceKind.DNSZone, SourceKind.DNSZoneWWW}
    assert seeds.failures == ["broken.example"]
    # names already starting with www. are not doubled
    assert "www.www.c.example" not in r.queries
    assert resolve_zone_domains(["a.example"], r, include_www=False).addresses() == [a]


def test_v4_derivation(tmp_path):
    records = tmp_path / "v4.jsonl"
    rows = [
        {"v4_address": "192.0.2.1", "rdns_name": "host.example", "cert_names": ["*.wild.example", "2001:db8::99"],
         "port": 1883, "protocol": "MQTT"},
        {"v4_address": "192.0.2.2", "rdns_name": None, "cert_names": ["fe80::zz"], "port": 5671, "protocol": "AMQP"},
    ]
    records.write_text("".join(json.dumps(r) + "\n" for r in rows))
    r = MockResolver({"host.example": ["2001:db8::5"], "www.host.example": ["2001:db8::6"]})
    seeds = derive_from_v4(load_v4_records(records), r)
    assert seeds.addresses() == [parse_address("2001:db8::5"), parse_address("2001:db8::99")]
    assert "wild.example" not in r.queries and "*.wild.example" not in r.queries
    assert seeds.by_source(SourceKind.V4Derived) == seeds.addresses()


def test_v4_records_bad_line(tmp_path):
    p = tmp_path / "v4.jsonl"
    p.write_text('{"v4_address": "192.0.2.1"}\n')
    with pytest.raises(UnreadableFile):
        load_v4_records(p)


def _seedlist(pairs):
    s = SeedList()
    for addr, kind in pairs:
        s.add(addr, SourceTag.seed(kind))
    return s


pairs = st.lists(st.tuples(st.integers(0, 64), st.sampled_from([SourceKind.TUMHitlist, SourceKind.DNSZone])),
                 max_size=20)


@given(pairs, pairs)
def test_merge_is_commutative_union(a, b):
    x, y = _seedlist(a), _seedlist(b)
    m1, m2 = x.merge(y), y.merge(x)
    assert m1.to_rows() == m2.to_rows()
    assert set(m1.addresses()) == set(x.addresses()) | set(y.addresses())


def test_sample_is_deterministic_subset():
    s = _seedlist([(i, SourceKind.TUMHitlist) for i in range(100)])
    a, b = sample_seeds(s, 10, 5), sample_seeds(s, 10, 5)
    assert a.addresses() == b.addresses() and len(a) == 10
    assert set(a.addresses()) <= set(s.addresses())
    assert sample_seeds(s, 1000, 5).addresses() == s.addresses()
    with pytest.raises(ValueError):
        sample_seeds(s, -1, 0)


def test_rows_round_trip():
    s = _seedlist([(1, SourceKind.TUMHitlist), (1, SourceKind.DNSZone), (7, SourceKind.V4Derived)])
    assert SeedList.from_rows(s.to_rows()).to_rows() == s.to_rows()

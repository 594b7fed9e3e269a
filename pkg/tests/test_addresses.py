import ipaddress

import pytest
from hypothesis import given, strategies as st

from v6iot.addresses import (MAX_ADDR, MalformedAddress, Prefix, format_address, nybble_at, nybble_compose,
                             nybble_decompose, nybble_mask, parse_address)
from v6iot.model import (ALL_SPECS, HostClass, Protocol, ProtocolSpec, SourceKind, SourceTag, Transport,
                         specs_for)

addrs = st.integers(min_value=0, max_value=MAX_ADDR)


@given(addrs)
def test_text_round_trip(a):
    assert parse_address(format_address(a)) == a
    assert format_address(a) == ipaddress.IPv6Address(a).compressed


@given(addrs)
def test_nybble_round_trip(a):
    nybbles = nybble_decompose(a)
    assert len(nybbles) == 32
    assert nybble_compose(nybbles) == a
    assert all(nybble_at(a, i) == n for i, n in enumerate(nybbles))


def test_nybble_mask_positions():
    assert nybble_mask([31]) == 0xF
    assert nybble_mask([0]) == 0xF << 124
    with pytest.raises(ValueError):
        nybble_compose([16] + [0] * 31)


@pytest.mark.parametrize("text", ["2001:db8:::1", "2001:db8::g", "fe80::1%eth0", "2001:db8::/64", "", "1.2.3.4"])
def test_malformed_literals(text):
    with pytest.raises(MalformedAddress) as info:
        parse_address(text)
    assert info.value.position is not None


def test_malformed_offset_points_at_bad_char():
    with pytest.raises(MalformedAddress) as info:
        parse_address("2001:db8::zz")
    assert info.value.position == 10


def test_prefix_contains_and_enclosing():
    p = Prefix.parse("2001:db8::/32")
    assert p.contains(parse_address("2001:db8:ffff::1"))
    assert not p.contains(parse_address("2001:db9::"))
    assert p.size == 1 << 96
    q = Prefix.enclosing(parse_address("2001:db8:1:2:3::4"), 64)
    assert str(q) == "2001:db8:1:2::/64"
    assert p.covers(q) and not q.covers(p)
    with pytest.raises(ValueError):
        Prefix(parse_address("2001:db8::1"), 64)


@given(addrs, st.integers(min_value=0, max_value=128))
def test_enclosing_prefix_contains_address(a, n):
    p = Prefix.enclosing(a, n)
    assert p.contains(a)
    assert p.base <= a <= p.last


def test_source_tag_text_round_trip():
    tags = [SourceTag.seed(k) for k in SourceKind if k is not SourceKind.Generator]
    tags += [SourceTag.generator("density", "TUMHitlist"), SourceTag.generator("x@y"), ]
    for t in tags:
        assert SourceTag.parse(str(t)) == t
    assert str(SourceTag.generator("density", SourceKind.DNSZone)) == "Generator:density@DNSZone"


def test_source_tag_invariants():
    with pytest.raises(ValueError):
        SourceTag(SourceKind.Generator)
    with pytest.raises(ValueError):
        SourceTag(SourceKind.DNSZone, "name")
    with pytest.raises(ValueError):
        SourceTag.generator("g", SourceKind.Generator)


def test_protocol_port_matrix():
    assert len(ALL_SPECS) == 8
    assert [s.port for s in specs_for("MQTT")] == [1883, 8883]
    assert [s.port for s in specs_for(Protocol.AMQP)] == [5672, 5671]
    assert [s.port for s in specs_for("OPCUA")] == [4840, 4843]
    coap, coaps = specs_for("COAP")
    assert (coap.port, coaps.port) == (5683, 5684)
    assert coap.transport is Transport.DatagramUDP and coaps.secured and not coap.secured
    assert ProtocolSpec.parse("mqtt:8883").secured
    assert ProtocolSpec.parse("AMQP").port == 5672
    assert ProtocolSpec.parse("MQTT:1883").sibling.port == 8883
    with pytest.raises(ValueError):
        ProtocolSpec.parse("MQTT:80")


def test_host_class_rank_order():
    order = [HostClass.NoResponse, HostClass.FilteredTransport, HostClass.TransportOnly, HostClass.TlsNoApp,
             HostClass.ValidPlain, HostClass.ValidTls]
    assert [c.rank for c in order] == sorted(c.rank for c in order)
    assert len({c.rank for c in order}) == len(order)

import pytest

from v6iot.addresses import Prefix, parse_address
from v6iot.harness import (Behavior, DuplicatePlantedAddress, HostClass, InvalidBehavior, Kind, UniverseSpec,
                           build_universe, standard_spec)
from v6iot.io import read_jsonl
from v6iot.model import Protocol

from conftest import TINY_SPEC


def test_standard_universe_shape():
    u = build_universe(standard_spec())
    assert len(u.plants) == 1000
    kinds = {b.kind for p in u.plants for b in p.behaviors}
    assert kinds == set(Kind)
    assert {p.protocol for p in u.plants} == set(Protocol)
    assert sum(p.alias_prefix is not None for p in u.plants) == 10


def test_build_is_deterministic():
    a = build_universe(standard_spec(rng_seed=3))
    b = build_universe(standard_spec(rng_seed=3))
    c = build_universe(standard_spec(rng_seed=4))
    assert a.ground_truth() == b.ground_truth()
    assert a.addresses() != c.addresses()


def test_without_drops_protocol():
    u = build_universe(standard_spec(without=["COAP"]))
    assert all(p.protocol is not Protocol.COAP for p in u.plants)
    assert len(u.plants) == 1000


def test_behavior_parsing():
    assert Behavior.parse("WeakTls:sha1") == Behavior(Kind.WeakTls, "sha1")
    assert str(Behavior.parse("AliasedSubnet:2001:db8::/64")) == "AliasedSubnet:2001:db8::/64"
    for bad in ("WeakTls", "WeakTls:md4", "Bogus", "ValidPlain:x"):
        with pytest.raises(InvalidBehavior):
            Behavior.parse(bad)


@pytest.mark.parametrize("protocol,behaviors", [
    ("MQTT", ["AnonymousOpen"]),
    ("MQTT", ["ValidPlain", "TlsOnStandardPort"]),
    ("MQTT", ["ValidPlain", "AnonymousOpen", "AuthRequired"]),
    ("COAP", ["ValidPlain", "AnonymousOpen"]),
    ("MQTT", ["ValidPlain", "Tls13"]),
    ("MQTT", ["ValidPlain", "AliasedSubnet:2001:db9::/64"]),
])
def test_contradictory_behaviors_rejected(protocol, behaviors):
    with pytest.raises(InvalidBehavior):
        build_universe({"deployments": [{"address": "2001:db8::1", "protocol": protocol, "behaviors": behaviors}]})


def test_duplicate_addresses_rejected():
    dep = {"address": "2001:db8::1", "protocol": "MQTT", "behaviors": ["ValidPlain"]}
    with pytest.raises(DuplicatePlantedAddress):
        build_universe({"deployments": [dep, dict(dep, protocol="AMQP")]})
    aliased = {"address": "2001:db8::1", "protocol": "MQTT", "behaviors": ["ValidPlain", "AliasedSubnet"]}
    inside = {"address": "2001:db8::2", "protocol": "AMQP", "behaviors": ["ValidPlain"]}
    with pytest.raises(DuplicatePlantedAddress):
        build_universe({"deployments": [aliased, inside]})


def test_cluster_that_does_not_fit():
    with pytest.raises(ValueError):
        build_universe({"clusters": [{"prefix": "2001:db8::/124", "count": 10, "density": 0.5}]})


def test_expected_labels(tiny_universe):
    u = tiny_universe
    by_last = {p.address & 0xFF: p for p in u.plants}
    assert by_last[1].expected_class is HostClass.ValidPlain and by_last[1].expected_access() == "AnonymousAllowed"
    assert by_last[2].expected_class is HostClass.ValidTls and by_last[2].expected_access() == "AuthRequired"
    assert by_last[3].expected_findings() == ["DeprecatedHashCert", "GuidelineViolation"]
    assert by_last[6].expected_class is HostClass.FilteredTransport
    assert by_last[7].expected_class is HostClass.TransportOnly
    assert by_last[8].tls_adopting and by_last[8].expected_access() is None
    assert u.expected(parse_address("2001:db8::99"), Protocol.MQTT) is HostClass.NoResponse
    assert u.expected(by_last[1].address, Protocol.AMQP) is HostClass.NoResponse


def test_aliased_prefix_answers_everywhere():
    u = build_universe({"deployments": [
        {"address": "2001:db8:0:1::5", "protocol": "MQTT", "behaviors": ["ValidPlain", "AliasedSubnet"]}]})
    plant = u.plants[0]
    assert plant.alias_prefix == Prefix.parse("2001:db8:0:1::/64")
    assert u.lookup(parse_address("2001:db8:0:1:ffff::1")) is plant
    assert u.lookup(parse_address("2001:db8:0:2::1")) is None


def test_ground_truth_file(tmp_path, tiny_universe):
    n = tiny_universe.write_ground_truth(tmp_path / "gt.jsonl")
    rows = read_jsonl(tmp_path / "gt.jsonl")
    assert n == len(rows) == len(TINY_SPEC["deployments"])
    assert rows == sorted(rows, key=lambda r: parse_address(r["address"]))
    assert {"expected_class", "expected_findings", "expected_access", "aliased"} <= set(rows[0])


def test_spec_round_trip_and_resolver():
    spec = UniverseSpec.from_json(TINY_SPEC)
    assert spec.domains["iot.example"] == ["2001:db8::1"]
    u = build_universe(spec)
    assert u.resolver.aaaa("IOT.example.") == [parse_address("2001:db8::1")]

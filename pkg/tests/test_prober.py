import pytest

from v6iot.addresses import parse_address
from v6iot.harness import SimDispatcher, build_universe
from v6iot.harness.responders import MqttBroker
from v6iot.model import ProtocolSpec, specs_for
from v6iot.prober import (Access, AppStatus, ProbeOutcome, Prober, PolitenessPolicy, TlsStatus, TransportStatus,
                          audit, mqtt_access)
from v6iot.prober.policy import MINUTE, US

from conftest import TINY_SPEC


def _outcomes(universe, **kw):
    prober = Prober(universe.dispatcher(), **kw)
    targets = [(p.address, s) for p in universe.plants for s in specs_for(p.protocol)]
    outs = prober.probe_all(targets, rng_seed=1)
    return prober, {(o.address & 0xFF, o.spec.port): o for o in outs}


def test_outcome_per_behavior(tiny_universe):
    _, got = _outcomes(tiny_universe)
    assert len(got) == 16
    plain = got[(1, 1883)]
    assert plain.valid and plain.tls is TlsStatus.NotAttempted and plain.meta["connack_code"] == 0
    assert got[(1, 8883)].transport is TransportStatus.Refused
    assert got[(2, 8883)].valid_over_tls and got[(2, 8883)].tls_params.cert is not None
    assert got[(3, 5671)].valid_over_tls and "PLAIN" in got[(3, 5671)].meta["mechanisms"]
    assert got[(4, 4840)].valid and got[(4, 4840)].meta["endpoints"]
    assert got[(5, 5683)].valid and "/.well-known/core" in got[(5, 5683)].meta["resources"]
    assert got[(6, 1883)].transport is TransportStatus.FaultyTransport
    web = got[(7, 1883)]
    assert web.transport is TransportStatus.Established and web.app is AppStatus.Invalid
    assert web.tls is TlsStatus.Failed  # fallback tried and refused
    dtls = got[(8, 5683)]
    assert dtls.valid_over_tls and dtls.tls_on_standard_port


def test_unplanted_address_times_out(tiny_universe):
    prober = Prober(tiny_universe.dispatcher())
    spec = ProtocolSpec.parse("MQTT")
    out, end = prober.attempt(parse_address("2001:db8::99"), spec, 0, use_tls=False)
    assert out.transport is TransportStatus.Timeout and not out.valid
    assert end >= prober.policy.transport_timeout_us
    udp, _ = prober.attempt(parse_address("2001:db8::99"), ProtocolSpec.parse("COAP"), 10 * MINUTE, use_tls=False)
    assert udp.transport is TransportStatus.Timeout


def test_outcome_json_round_trip(tiny_universe):
    _, got = _outcomes(tiny_universe)
    for o in got.values():
        assert ProbeOutcome.from_json(o.to_json()) == o


def test_outcome_invariants():
    spec = ProtocolSpec.parse("MQTT")
    with pytest.raises(ValueError):
        ProbeOutcome(1, spec, 0, TransportStatus.Timeout, app=AppStatus.Valid)
    with pytest.raises(ValueError):
        ProbeOutcome(1, spec, 0, TransportStatus.Established, tls=TlsStatus.Completed)


def test_probe_log_respects_politeness(tiny_universe):
    prober, _ = _outcomes(tiny_universe)
    rep = audit(prober.events, prober.policy)
    assert rep.ok and rep.min_host_gap_us >= 15 * MINUTE
    # every event belongs to a known purpose and carries its packets
    assert {e.purpose for e in prober.events} <= {"validate", "validate-tls-fallback"}
    assert all(e.packets and e.start_us <= e.end_us for e in prober.events)


def test_probe_order_depends_on_seed(tiny_universe):
    def order(seed):
        p = Prober(tiny_universe.dispatcher())
        targets = [(pl.address, s) for pl in tiny_universe.plants for s in specs_for(pl.protocol)]
        return [(o.address, o.spec.port) for o in p.probe_all(targets, rng_seed=seed)]
    assert order(1) == order(1)
    assert order(1) != order(2)


def _broker_session(universe, factory, policy=None):
    prober = Prober(SimDispatcher(universe, server_factory=factory), policy or PolitenessPolicy())
    plant = universe.lookup(parse_address("2001:db8::1"))
    session = prober.open_session(plant.address, specs_for(plant.protocol)[0], "access", 0)
    session.connect(prober.policy.transport_timeout_us)
    return prober, session


def test_mqtt_traffic_cap_stops_session(tiny_universe):
    _, session = _broker_session(tiny_universe, lambda ep: MqttBroker(ep.plant, flood_bytes=50 << 20))
    access, meta = mqtt_access(session, 10 * US, "c", observe_us=60 * US)
    assert access is Access.AnonymousAllowed and meta["session_capped"]
    assert session.bytes_exchanged <= 10 * 1024 * 1024
    assert "payload" not in meta


def test_mqtt_duration_cap_stops_session(tiny_universe):
    _, session = _broker_session(tiny_universe, lambda ep: MqttBroker(ep.plant, trickle_us=US))
    access, meta = mqtt_access(session, 10 * US, "c", observe_us=3 * 60 * MINUTE)
    assert meta["session_capped"] and meta["topic_count"] > 100
    assert session.now - session.start_us <= 30 * MINUTE + 10 * US


def test_retained_topics_counted_without_payloads():
    u = build_universe(TINY_SPEC)
    _, session = _broker_session(u, None)
    access, meta = mqtt_access(session, 10 * US, "c", observe_us=10 * US)
    assert access is Access.AnonymousAllowed
    assert meta["topic_count"] > 0 and not meta["session_capped"]
    assert set(meta) == {"connack_code", "topic_count", "session_capped"}

import pytest

from v6iot.harness import HostClass
from v6iot.model import Protocol, ProtocolSpec, SourceTag, SourceKind
from v6iot.prober import AppStatus, ProbeOutcome, TlsStatus, TransportStatus
from v6iot.validator import (DeploymentRecord, classify_all, classify_host, classify_outcome, dedupe_deployments,
                             funnel)

from conftest import scan_universe, TINY_SPEC

STD, SEC = ProtocolSpec.parse("MQTT:1883"), ProtocolSpec.parse("MQTT:8883")


def _o(spec, transport=TransportStatus.Established, tls=TlsStatus.NotAttempted, app=AppStatus.NotAttempted,
       addr=1):
    from v6iot.prober import CertSummary, TlsParams
    params = TlsParams("TLS1.2", "TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256",
                       CertSummary("cn", ("cn",), "sha256WithRSAEncryption", 2048)) \
        if tls is TlsStatus.Completed else None
    return ProbeOutcome(addr, spec, 0, transport, tls, params, app)


@pytest.mark.parametrize("outcome,expected", [
    (_o(STD, TransportStatus.Timeout), HostClass.NoResponse),
    (_o(STD, TransportStatus.Refused), HostClass.NoResponse),
    (_o(STD, TransportStatus.FaultyTransport), HostClass.FilteredTransport),
    (_o(STD, app=AppStatus.Invalid), HostClass.TransportOnly),
    (_o(STD, app=AppStatus.Timeout), HostClass.TransportOnly),
    (_o(SEC, tls=TlsStatus.Failed), HostClass.TransportOnly),
    (_o(SEC, tls=TlsStatus.Completed, app=AppStatus.Invalid), HostClass.TlsNoApp),
    (_o(STD, app=AppStatus.Valid), HostClass.ValidPlain),
    (_o(SEC, tls=TlsStatus.Completed, app=AppStatus.Valid), HostClass.ValidTls),
])
def test_classify_outcome(outcome, expected):
    assert classify_outcome(outcome) is expected


def test_host_takes_furthest_port():
    hc = classify_host([_o(SEC, tls=TlsStatus.Failed), _o(STD, app=AppStatus.Valid)])
    assert hc.host_class is HostClass.ValidPlain and hc.valid
    assert hc.port_classes == {1883: HostClass.ValidPlain, 8883: HostClass.TransportOnly}
    with pytest.raises(ValueError):
        classify_host([_o(STD), _o(STD, addr=2)])
    with pytest.raises(ValueError):
        classify_host([])


def test_single_record_for_dual_port_host():
    outs = [_o(STD, app=AppStatus.Valid), _o(SEC, tls=TlsStatus.Completed, app=AppStatus.Valid)]
    deps = dedupe_deployments(classify_all(outs), {1: {SourceTag.seed(SourceKind.TUMHitlist)}})
    assert len(deps) == 1
    d = deps[0]
    assert d.tls_adopting and d.valid_ports == [1883, 8883] and d.tls_ports == [8883]
    assert d.host_class is HostClass.ValidTls and d.origins == ["TUMHitlist"]
    assert DeploymentRecord.from_json(d.to_json()) == d


def test_invalid_hosts_yield_no_record():
    outs = [_o(STD, app=AppStatus.Invalid), _o(SEC, TransportStatus.Timeout)]
    assert dedupe_deployments(classify_all(outs)) == []


def test_funnel_counts():
    outs = [_o(STD, app=AppStatus.Valid), _o(SEC, tls=TlsStatus.Completed, app=AppStatus.Valid),
            _o(STD, TransportStatus.FaultyTransport, addr=2), _o(SEC, tls=TlsStatus.Failed, addr=2),
            _o(STD, TransportStatus.Timeout, addr=3)]
    rows = {r.port: r for r in funnel(outs, [Protocol.MQTT])}
    assert (rows[1883].hosts, rows[1883].transport, rows[1883].tls, rows[1883].valid) == (2, 1, None, 1)
    assert (rows[8883].hosts, rows[8883].transport, rows[8883].tls, rows[8883].valid) == (2, 2, 1, 1)
    assert all(r.monotone for r in rows.values())
    assert rows[1883].to_row() == ["MQTT", 1883, "standard", 2, 1, "", 1]


def test_tiny_universe_matches_ground_truth():
    scan = scan_universe(TINY_SPEC)
    got = {(hc.address, hc.protocol): hc.host_class for hc in classify_all(scan.outcomes)}
    for p in scan.universe.plants:
        assert got[(p.address, p.protocol)] is p.expected_class
    assert len(scan.deployments) == sum(p.valid for p in scan.universe.plants)

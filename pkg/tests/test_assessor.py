import json
from dataclasses import replace

import pytest

from v6iot.assessor import (Assessor, Category, GuidelineProfile, SecurityFinding, assess_access_control,
                            assess_tls)
from v6iot.model import Protocol
from v6iot.prober import Access, CertSummary, audit
from v6iot.prober.policy import MINUTE

from conftest import scan_universe

SPEC = {"rng_seed": 5, "deployments": [
    {"address": "2001:db8::1", "protocol": "MQTT", "behaviors": ["ValidPlain", "AnonymousOpen"]},
    {"address": "2001:db8::2", "protocol": "MQTT", "behaviors": ["ValidTls", "WeakTls:insecure_suite"]},
    {"address": "2001:db8::3", "protocol": "AMQP", "behaviors": ["ValidTls", "WeakTls:sha1", "WeakTls:short_key"]},
    {"address": "2001:db8::4", "protocol": "AMQP", "behaviors": ["ValidPlain", "AnonymousOpen"]},
    {"address": "2001:db8::5", "protocol": "AMQP", "behaviors": ["ValidPlain"]},
    {"address": "2001:db8::6", "protocol": "OPCUA", "behaviors": ["ValidTls", "Tls13"]},
    {"address": "2001:db8::7", "protocol": "COAP", "behaviors": ["TlsOnStandardPort", "WeakTls:insecure_suite"]},
    {"address": "2001:db8::8", "protocol": "MQTT", "behaviors": ["ValidPlain", "ValidTls"]},
    {"address": "2001:db8::9", "protocol": "AMQP", "behaviors": ["ValidPlain"]},
]}


@pytest.fixture(scope="module")
def scan():
    return scan_universe(SPEC)


@pytest.fixture(scope="module")
def assessment(scan):
    return Assessor(scan.prober).assess(scan.deployments)


def test_findings_match_planted_labels(scan, assessment):
    for p in scan.universe.plants:
        assert assessment.findings_for(p.address, p.protocol) == p.expected_findings(), p.behaviors


def test_access_matches_planted_labels(scan, assessment):
    for p in scan.universe.plants:
        got = assessment.access_for(p.address, p.protocol)
        assert (got.value if got else None) == p.expected_access(), p.behaviors
    anon = [f for f in assessment.findings if f.category is Category.AnonymousAccess]
    assert sorted(f.address & 0xF for f in anon) == [1, 4]


def test_findings_carry_evidence(assessment):
    insecure = [f for f in assessment.findings if f.category is Category.InsecureCipherAccepted]
    assert insecure and all("negotiated_suite" in f.evidence for f in insecure)
    violations = [f for f in assessment.findings if f.category is Category.GuidelineViolation]
    assert violations and all(f.evidence["profile_version"] == "2023-06" for f in violations)
    assert all(f.evidence["violations"] for f in violations)
    for f in assessment.findings:
        assert SecurityFinding.from_json(f.to_json()) == f


def test_assessment_handshakes_are_polite(scan, assessment):
    rep = audit(scan.prober.events, scan.prober.policy)
    assert rep.ok and rep.min_host_gap_us >= 15 * MINUTE
    purposes = {e.purpose for e in scan.prober.events}
    assert {"assess-insecure", "assess-tls13", "assess-access"} <= purposes


def test_stricter_profile_changes_findings(scan, tmp_path):
    default = GuidelineProfile.load()
    strict = replace(default, version="strict", min_rsa_bits=4096)
    path = tmp_path / "strict.json"
    path.write_text(json.dumps(strict.to_json()))
    assert GuidelineProfile.load(path) == strict
    dep = next(d for d in scan.deployments if d.address & 0xF == 8 and d.tls_adopting)
    assert Category.ShortKeyCert.value not in [f.category.value for f in assess_tls(dep, scan.prober, default)]
    cats = [f.category for f in assess_tls(dep, scan.prober, strict)]
    assert Category.ShortKeyCert in cats and Category.GuidelineViolation in cats


def test_profile_requires_keys():
    with pytest.raises(ValueError):
        GuidelineProfile.from_json({"min_rsa_bits": 2048})


def test_cert_issues_only_rsa_keys_are_sized():
    profile = GuidelineProfile.load()
    ec = CertSummary("cn", ("cn",), "ecdsa-with-SHA256", public_key_algorithm="EC", public_key_bits=256)
    assert profile.cert_issues(ec) == []
    weak = CertSummary("cn", ("cn",), "sha1WithRSAEncryption", public_key_bits=1024)
    assert [c for c, _, _ in profile.cert_issues(weak)] == [Category.DeprecatedHashCert, Category.ShortKeyCert]


def test_plain_only_broker_access(scan):
    dep = next(d for d in scan.deployments if d.address & 0xF == 9)
    assert dep.protocol is Protocol.AMQP
    assert assess_access_control(dep, scan.prober) is Access.AuthRequired


def test_coap_and_opcua_get_no_access_check(scan, assessment):
    assert all(r.protocol in (Protocol.MQTT, Protocol.AMQP) for r in assessment.access)

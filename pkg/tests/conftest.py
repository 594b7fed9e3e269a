from dataclasses import dataclass

import pytest

from v6iot.harness import Universe, build_universe, standard_spec
from v6iot.model import specs_for
from v6iot.prober import ProbeOutcome, Prober
from v6iot.validator import DeploymentRecord, classify_all, dedupe_deployments


@dataclass
class Scan:
    universe: Universe
    prober: Prober
    outcomes: list[ProbeOutcome]
    deployments: list[DeploymentRecord]


def scan_universe(spec: dict, rng_seed: int = 1) -> Scan:
    universe = build_universe(spec)
    targets = [(p.address, s) for p in universe.plants for s in specs_for(p.protocol)]
    prober = Prober(universe.dispatcher())
    outcomes = prober.probe_all(targets, rng_seed=rng_seed)
    return Scan(universe, prober, outcomes, dedupe_deployments(classify_all(outcomes)))


@pytest.fixture(scope="session")
def standard_scan() -> Scan:
    """The 1000-plant standard universe, every planted port probed once."""
    return scan_universe(standard_spec())


TINY_SPEC = {
    "rng_seed": 3,
    "deployments": [
        {"address": "2001:db8::1", "protocol": "MQTT", "behaviors": ["ValidPlain", "AnonymousOpen"]},
        {"address": "2001:db8::2", "protocol": "MQTT", "behaviors": ["ValidPlain", "ValidTls"]},
        {"address": "2001:db8::3", "protocol": "AMQP", "behaviors": ["ValidTls", "WeakTls:sha1"]},
        {"address": "2001:db8::4", "protocol": "OPCUA", "behaviors": ["ValidPlain"]},
        {"address": "2001:db8::5", "protocol": "COAP", "behaviors": ["ValidPlain"]},
        {"address": "2001:db8::6", "protocol": "MQTT", "behaviors": ["GarbageTransport"]},
        {"address": "2001:db8::7", "protocol": "MQTT", "behaviors": ["NonIoTService"]},
        {"address": "2001:db8::8", "protocol": "COAP", "behaviors": ["TlsOnStandardPort"]},
    ],
    "domains": {"iot.example": ["2001:db8::1"], "www.iot.example": ["2001:db8::2"]},
}


@pytest.fixture
def tiny_universe():
    return build_universe(TINY_SPEC)

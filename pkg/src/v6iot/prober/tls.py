"""(D)TLS handshake model: offers, negotiation and certificate summaries.

The prober never needs record-layer crypto to grade a server: what matters
is which versions and suites a peer accepts and what certificate it shows.
Offers and results are therefore plain values, and the in-process harness
negotiates them the way a server would (highest shared version, server
suite preference).
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

VERSIONS = ("TLS1.0", "TLS1.1", "TLS1.2", "TLS1.3")

TLS13_SUITES = (
    "TLS_AES_128_GCM_SHA256",
    "TLS_AES_256_GCM_SHA384",
    "TLS_CHACHA20_POLY1305_SHA256",
)

MODERN_SUITES = (
    "TLS_ECDHE_ECDSA_WITH_AES_128_GCM_SHA256",
    "TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256",
    "TLS_ECDHE_ECDSA_WITH_AES_256_GCM_SHA384",
    "TLS_ECDHE_RSA_WITH_AES_256_GCM_SHA384",
    "TLS_ECDHE_RSA_WITH_CHACHA20_POLY1305_SHA256",
    "TLS_DHE_RSA_WITH_AES_128_GCM_SHA256",
)

LEGACY_SUITES = (
    "TLS_ECDHE_RSA_WITH_AES_128_CBC_SHA",
    "TLS_ECDHE_RSA_WITH_AES_256_CBC_SHA",
    "TLS_RSA_WITH_AES_128_GCM_SHA256",
    "TLS_RSA_WITH_AES_128_CBC_SHA",
    "TLS_RSA_WITH_AES_256_CBC_SHA",
)

WEAK_SUITES = (
    "TLS_RSA_WITH_3DES_EDE_CBC_SHA",
    "TLS_RSA_WITH_RC4_128_SHA",
    "TLS_RSA_WITH_RC4_128_MD5",
    "TLS_RSA_WITH_DES_CBC_SHA",
    "TLS_RSA_EXPORT_WITH_RC4_40_MD5",
    "TLS_RSA_EXPORT_WITH_DES40_CBC_SHA",
    "TLS_RSA_WITH_NULL_SHA",
    "TLS_RSA_WITH_NULL_MD5",
    "TLS_DH_anon_WITH_AES_128_CBC_SHA",
    "TLS_ECDH_anon_WITH_AES_128_CBC_SHA",
)

ALL_SUITES = TLS13_SUITES + MODERN_SUITES + LEGACY_SUITES + WEAK_SUITES


class TlsHandshakeError(Exception):
    """Peer did not complete a handshake (alert, close, or non-TLS bytes)."""


@dataclass(frozen=True)
class ClientHello:
    versions: tuple[str, ...]
    cipher_suites: tuple[str, ...]
    server_name: str | None = None
    client_cert_subject: str | None = None

    @property
    def max_version(self) -> str:
        return max(self.versions, key=VERSIONS.index)


def scan_hello(contact: str | None = None) -> ClientHello:
    """Compatibility offer used while validating: every version, every suite."""
    return ClientHello(VERSIONS, ALL_SUITES, None, contact)


def suites_matching(families, catalog=ALL_SUITES) -> tuple[str, ...]:
    return tuple(s for s in catalog if suite_in_families(s, families))


def suite_in_families(suite: str, families) -> bool:
    """True if ``suite`` equals an entry or contains it as an ``_``-separated token."""
    tokens = set(suite.split("_"))
    return any(f == suite or f in tokens for f in families)


@dataclass(frozen=True)
class CertSummary:
    common_name: str | None
    san_names: tuple[str, ...] = ()
    signature_algorithm: str = "sha256WithRSAEncryption"
    public_key_algorithm: str = "RSA"
    public_key_bits: int = 2048
    not_before: str = "2023-01-01T00:00:00Z"
    not_after: str = "2025-01-01T00:00:00Z"
    fingerprint: str = ""

    def __post_init__(self):
        if not self.fingerprint:
            digest = hashlib.sha256(repr(self._fields()).encode()).hexdigest()
            object.__setattr__(self, "fingerprint", digest)

    def _fields(self):
        return (self.common_name, self.san_names, self.signature_algorithm,
                self.public_key_algorithm, self.public_key_bits, self.not_before, self.not_after)

    @property
    def signature_hash(self) -> str:
        """Hash family of the signature algorithm, lowercase (``sha1``, ``sha256``, ``md5`` ...)."""
        alg = self.signature_algorithm.lower()
        for h in ("sha512", "sha384", "sha256", "sha224", "sha1", "md5", "md2"):
            if h in alg or h.replace("sha", "sha-") in alg:
                return h
        return alg

    def to_json(self) -> dict:
        d = asdict(self)
        d["san_names"] = list(self.san_names)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "CertSummary":
        obj = dict(obj)
        obj["san_names"] = tuple(obj.get("san_names") or ())
        return cls(**obj)


@dataclass(frozen=True)
class TlsParams:
    version: str
    cipher_suite: str
    cert: CertSummary | None

    def to_json(self) -> dict:
        return {"version": self.version, "cipher_suite": self.cipher_suite,
                "cert": self.cert.to_json() if self.cert else None}

    @classmethod
    def from_json(cls, obj: dict) -> "TlsParams":
        cert = obj.get("cert")
        return cls(obj["version"], obj["cipher_suite"], CertSummary.from_json(cert) if cert else None)


@dataclass(frozen=True)
class TlsServerConfig:
    versions: tuple[str, ...] = ("TLS1.2",)
    cipher_suites: tuple[str, ...] = MODERN_SUITES
    cert: CertSummary = field(default_factory=lambda: CertSummary("iot.example"))

    def negotiate(self, hello: ClientHello) -> TlsParams:
        shared = [v for v in VERSIONS if v in hello.versions and v in self.versions]
        if not shared:
            raise TlsHandshakeError("protocol_version")
        for version in reversed(shared):
            if version == "TLS1.3":
                pool = [s for s in self.cipher_suites if s in TLS13_SUITES]
            else:
                pool = [s for s in self.cipher_suites if s not in TLS13_SUITES]
            for suite in pool:
                if suite in hello.cipher_suites:
                    return TlsParams(version, suite, self.cert)
        raise TlsHandshakeError("handshake_failure")

"""Network access behind one small interface.

The prober talks to a :class:`Dispatcher`; the harness supplies an
in-process one, :class:`SocketDispatcher` is the thin real-network adapter.
Channels report how much (simulated or wall) time the peer consumed so the
prober can keep its own clock.
"""
from __future__ import annotations

import hashlib
import socket
import ssl
import time
from dataclasses import dataclass
from typing import Protocol as TypingProtocol

from ..addresses import format_address
from ..model import Transport
from .tls import CertSummary, ClientHello, TlsHandshakeError, TlsParams

UDP_HEADER_LEN = 8


class DispatchError(Exception):
    def __init__(self, message: str = "", elapsed_us: int = 0):
        super().__init__(message)
        self.elapsed_us = elapsed_us


class ConnectionRefused(DispatchError):
    pass


class ProbeTimeout(DispatchError):
    pass


class FaultyTransportError(DispatchError):
    """Peer answered, but not with a well-formed transport exchange."""


class PeerClosed(DispatchError):
    pass


@dataclass(frozen=True)
class Datagram:
    """A UDP payload together with the length the peer's header declared."""

    length_field: int
    payload: bytes

    @property
    def consistent(self) -> bool:
        return self.length_field == len(self.payload) + UDP_HEADER_LEN


class Channel(TypingProtocol):
    transport: Transport
    elapsed_us: int

    def send(self, data: bytes) -> None: ...

    def recv(self, timeout_us: int) -> bytes | Datagram: ...

    def start_tls(self, hello: ClientHello, timeout_us: int) -> TlsParams: ...

    def close(self) -> None: ...


class Dispatcher(TypingProtocol):
    def connect(self, addr: int, port: int, transport: Transport, timeout_us: int) -> Channel: ...


class SocketChannel:
    """Wraps a real socket. Manual smoke tests only; DTLS is not supported."""

    def __init__(self, sock: socket.socket, transport: Transport, elapsed_us: int = 0):
        self.sock = sock
        self.transport = transport
        self.elapsed_us = elapsed_us

    def _timed(self, fn, *args):
        t0 = time.monotonic()
        try:
            return fn(*args)
        finally:
            self.elapsed_us += int((time.monotonic() - t0) * 1e6)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, timeout_us: int) -> bytes | Datagram:
        self.sock.settimeout(timeout_us / 1e6)
        try:
            data = self._timed(self.sock.recv, 65535)
        except socket.timeout:
            raise ProbeTimeout("no data", timeout_us) from None
        except ConnectionResetError:
            raise PeerClosed("reset") from None
        if self.transport is Transport.DatagramUDP:
            # the kernel already validated the UDP header
            return Datagram(len(data) + UDP_HEADER_LEN, data)
        if not data:
            raise PeerClosed("closed")
        return data

    def start_tls(self, hello: ClientHello, timeout_us: int) -> TlsParams:
        if self.transport is Transport.DatagramUDP:
            raise TlsHandshakeError("DTLS is not available in the socket adapter")
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
        self.sock.settimeout(timeout_us / 1e6)
        try:
            wrapped = self._timed(ctx.wrap_socket, self.sock)
        except (ssl.SSLError, OSError) as exc:
            raise TlsHandshakeError(str(exc)) from None
        self.sock = wrapped
        name, version, _ = wrapped.cipher()
        cert = cert_summary_from_der(wrapped.getpeercert(binary_form=True))
        return TlsParams(version.replace("TLSv", "TLS"), name, cert)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def cert_summary_from_der(der: bytes | None) -> CertSummary | None:
    """Summarize a DER certificate; needs the optional ``cryptography`` package."""
    if not der:
        return None
    try:
        from cryptography import x509
        from cryptography.hazmat.primitives.asymmetric import ec, rsa
    except ImportError:
        return None
    cert = x509.load_der_x509_certificate(der)
    cn = cert.subject.get_attributes_for_oid(x509.NameOID.COMMON_NAME)
    try:
        san = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
        names = tuple(san.get_values_for_type(x509.DNSName))
    except x509.ExtensionNotFound:
        names = ()
    key = cert.public_key()
    algo = "RSA" if isinstance(key, rsa.RSAPublicKey) else "EC" if isinstance(key, ec.EllipticCurvePublicKey) \
        else type(key).__name__
    hash_alg = cert.signature_hash_algorithm
    before = getattr(cert, "not_valid_before_utc", None) or cert.not_valid_before
    after = getattr(cert, "not_valid_after_utc", None) or cert.not_valid_after
    return CertSummary(
        common_name=str(cn[0].value) if cn else None,
        san_names=names,
        signature_algorithm=f"{hash_alg.name if hash_alg else 'none'}With{algo}",
        public_key_algorithm=algo,
        public_key_bits=getattr(key, "key_size", 0),
        not_before=before.strftime("%Y-%m-%dT%H:%M:%SZ"),
        not_after=after.strftime("%Y-%m-%dT%H:%M:%SZ"),
        fingerprint=hashlib.sha256(der).hexdigest(),
    )


class SocketDispatcher:
    """Real-network dispatcher. Acceptance tests never use it."""

    def connect(self, addr: int, port: int, transport: Transport, timeout_us: int) -> SocketChannel:
        host = format_address(addr)
        kind = socket.SOCK_DGRAM if transport is Transport.DatagramUDP else socket.SOCK_STREAM
        sock = socket.socket(socket.AF_INET6, kind)
        sock.settimeout(timeout_us / 1e6)
        t0 = time.monotonic()
        try:
            sock.connect((host, port))
        except ConnectionRefusedError:
            sock.close()
            raise ConnectionRefused(host, int((time.monotonic() - t0) * 1e6)) from None
        except (socket.timeout, OSError):
            sock.close()
            raise ProbeTimeout(host, timeout_us) from None
        return SocketChannel(sock, transport, int((time.monotonic() - t0) * 1e6))

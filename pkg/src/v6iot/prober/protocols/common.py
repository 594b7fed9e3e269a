from __future__ import annotations


class ProtocolError(ValueError):
    """Peer bytes do not parse as the expected protocol message."""


class NeedMore(Exception):
    """Buffer holds an incomplete message."""

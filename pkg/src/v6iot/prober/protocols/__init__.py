"""Wire codecs for the scanned IoT protocols (client and server side)."""
from .common import NeedMore, ProtocolError

__all__ = ["NeedMore", "ProtocolError"]

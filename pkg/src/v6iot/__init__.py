"""Discovery, validation and security assessment of IoT deployments reachable over IPv6."""
from .addresses import Prefix, format_address, parse_address
from .model import HostClass, Protocol, ProtocolSpec, SourceKind, SourceTag

__version__ = "0.1.0"

__all__ = ["HostClass", "Prefix", "Protocol", "ProtocolSpec", "SourceKind", "SourceTag", "__version__",
           "format_address", "parse_address"]

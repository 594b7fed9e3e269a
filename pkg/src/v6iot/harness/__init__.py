from .responders import SimChannel, SimDispatcher, SimResponse, dispatch_probe, find_endpoint
from ..model import HostClass
from .universe import (Behavior, DuplicatePlantedAddress, InvalidBehavior, Kind, Plant, PortRole,
                       Universe, UniverseSpec, build_universe, standard_spec)

__all__ = [
    "Behavior", "DuplicatePlantedAddress", "HostClass", "InvalidBehavior", "Kind", "Plant", "PortRole",
    "SimChannel", "SimDispatcher", "SimResponse", "Universe", "UniverseSpec", "build_universe",
    "dispatch_probe", "find_endpoint", "standard_spec",
]

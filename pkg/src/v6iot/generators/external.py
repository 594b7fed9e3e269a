"""Import scanlists produced out-of-band by published generator tools."""
from __future__ import annotations

from ..model import SourceKind
from ..seeds import read_address_file
from .base import GeneratorRun, Scanlist, Technique


def import_external(path, generator_name: str, seed_source: SourceKind | str | None = None) -> Scanlist:
    """Read a one-address-per-line file; duplicates keep their first position."""
    seen = set()
    out = []
    for _, addr in read_address_file(path):
        if addr not in seen:
            seen.add(addr)
            out.append(addr)
    run = GeneratorRun(generator_name, Technique.ExternalImport,
                       SourceKind(seed_source) if seed_source else None, None, None, len(out))
    return Scanlist(run, out)

"""128-bit address arithmetic shared by every stage.

Addresses are carried around as plain ``int`` values (``Addr128``) because
generators and filters do a lot of bit twiddling; text only appears at the
edges (files, reports).
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable, NewType, Sequence

Addr128 = NewType("Addr128", int)

ADDR_BITS = 128
NYBBLES = 32
MAX_ADDR = (1 << ADDR_BITS) - 1

_HEXCHARS = set("0123456789abcdefABCDEF")


class MalformedAddress(ValueError):
    """Raised for text that is not a valid IPv6 literal.

    ``position`` is a character offset for single literals and a 1-based
    line number when raised by file loaders.
    """

    def __init__(self, text: str, position: int | None = None, reason: str = ""):
        self.text = text
        self.position = position
        self.reason = reason
        where = f" at {position}" if position is not None else ""
        msg = f"malformed IPv6 address {text!r}{where}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


def _error_offset(text: str) -> int:
    # best-effort pointer to the first offending character
    idx = text.find(":::")
    if idx >= 0:
        return idx + 2
    for i, ch in enumerate(text):
        if ch not in _HEXCHARS and ch not in ":.":
            return i
    return len(text)


def parse_address(text: str) -> Addr128:
    """Parse an IPv6 literal into its integer value."""
    if isinstance(text, int):
        if not 0 <= text <= MAX_ADDR:
            raise MalformedAddress(str(text), 0, "out of range")
        return Addr128(text)
    stripped = text.strip()
    if "%" in stripped or "/" in stripped:
        raise MalformedAddress(text, stripped.find("%") if "%" in stripped else stripped.find("/"),
                               "zone or prefix not allowed")
    try:
        return Addr128(int(ipaddress.IPv6Address(stripped)))
    except ipaddress.AddressValueError as exc:
        raise MalformedAddress(text, _error_offset(stripped), str(exc)) from None


def format_address(addr: int) -> str:
    """Canonical lowercase, zero-compressed text form."""
    return ipaddress.IPv6Address(addr).compressed


def nybble_decompose(addr: int) -> list[int]:
    """Split into 32 nybbles, most significant first."""
    return [(addr >> (4 * (NYBBLES - 1 - i))) & 0xF for i in range(NYBBLES)]


def nybble_compose(nybbles: Sequence[int]) -> Addr128:
    if len(nybbles) != NYBBLES:
        raise ValueError(f"expected {NYBBLES} nybbles, got {len(nybbles)}")
    value = 0
    for n in nybbles:
        if not 0 <= n <= 15:
            raise ValueError(f"nybble out of range: {n}")
        value = (value << 4) | n
    return Addr128(value)


def nybble_at(addr: int, position: int) -> int:
    return (addr >> (4 * (NYBBLES - 1 - position))) & 0xF


def nybble_mask(positions: Iterable[int]) -> int:
    """Bit mask covering the given nybble positions."""
    mask = 0
    for p in positions:
        mask |= 0xF << (4 * (NYBBLES - 1 - p))
    return mask


@dataclass(frozen=True, order=True)
class Prefix:
    base: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= ADDR_BITS:
            raise ValueError(f"prefix length out of range: {self.length}")
        if self.base & ~self.netmask & MAX_ADDR:
            raise ValueError(f"host bits set in {format_address(self.base)}/{self.length}")

    @property
    def netmask(self) -> int:
        return (MAX_ADDR << (ADDR_BITS - self.length)) & MAX_ADDR

    @property
    def size(self) -> int:
        return 1 << (ADDR_BITS - self.length)

    @property
    def last(self) -> int:
        return self.base | (~self.netmask & MAX_ADDR)

    def contains(self, addr: int) -> bool:
        return (addr & self.netmask) == self.base

    def covers(self, other: "Prefix") -> bool:
        return other.length >= self.length and self.contains(other.base)

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        text = text.strip()
        try:
            net = ipaddress.IPv6Network(text, strict=True)
        except ValueError as exc:
            raise MalformedAddress(text, _error_offset(text.split("/")[0]), str(exc)) from None
        return cls(int(net.network_address), net.prefixlen)

    @classmethod
    def enclosing(cls, addr: int, length: int) -> "Prefix":
        mask = (MAX_ADDR << (ADDR_BITS - length)) & MAX_ADDR
        return cls(addr & mask, length)

    def __str__(self):
        return f"{format_address(self.base)}/{self.length}"


def prefix_contains(prefix: Prefix, addr: int) -> bool:
    return prefix.contains(addr)

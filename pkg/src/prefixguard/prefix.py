"""IPv4 prefix arithmetic, AS numbers and AS paths."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

MAX_ASN = 2**32 - 1
DEFAULT_MAX_LENGTH = 24

_PREFIX_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})/(\d{1,3})$")


class PrefixError(ValueError):
    pass


class MalformedPrefix(PrefixError):
    pass


class NonCanonical(PrefixError):
    pass


class LengthOutOfRange(PrefixError):
    pass


class Unsplittable(PrefixError):
    """De-aggregation would produce prefixes longer than the allowed maximum."""


class InvalidAsn(ValueError):
    pass


def check_asn(value, origin: bool = True) -> int:
    """Validate an AS number and return it as ``int``.

    Numeric strings are accepted since several feeds serialize ASNs as text.
    ASN 0 is reserved and rejected when ``origin`` is set.
    """
    if isinstance(value, bool):
        raise InvalidAsn(f"not an AS number: {value!r}")
    if isinstance(value, str):
        if not value.isdigit():
            raise InvalidAsn(f"not an AS number: {value!r}")
        value = int(value)
    if not isinstance(value, int):
        raise InvalidAsn(f"not an AS number: {value!r}")
    if not 0 <= value <= MAX_ASN:
        raise InvalidAsn(f"AS number out of range: {value}")
    if origin and value == 0:
        raise InvalidAsn("AS 0 cannot originate a route")
    return value


def _mask(length: int) -> int:
    return (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF if length else 0


def _dotted(address: int) -> str:
    return ".".join(str((address >> s) & 0xFF) for s in (24, 16, 8, 0))


@dataclass(frozen=True, order=True)
class IpPrefix:
    address: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= 32:
            raise LengthOutOfRange(f"mask length {self.length} not in [0, 32]")
        if not 0 <= self.address <= 0xFFFFFFFF:
            raise MalformedPrefix(f"address {self.address} is not a 32-bit value")
        if self.address & ~_mask(self.length) & 0xFFFFFFFF:
            raise NonCanonical(f"{_dotted(self.address)}/{self.length} has host bits set")

    @property
    def size(self) -> int:
        return 1 << (32 - self.length)

    @property
    def last(self) -> int:
        return self.address + self.size - 1

    def contains(self, other: IpPrefix) -> bool:
        return self.length <= other.length and (other.address & _mask(self.length)) == self.address

    def contains_address(self, address: int) -> bool:
        return (address & _mask(self.length)) == self.address

    def overlaps(self, other: IpPrefix) -> bool:
        return self.contains(other) or other.contains(self)

    def __str__(self) -> str:
        return f"{_dotted(self.address)}/{self.length}"

    def __repr__(self) -> str:
        return f"IpPrefix({self})"


def parse_prefix(text: str) -> IpPrefix:
    """Parse ``a.b.c.d/len``. Host bits must already be zero."""
    if not isinstance(text, str):
        raise MalformedPrefix(f"expected prefix text, got {type(text).__name__}")
    m = _PREFIX_RE.match(text)
    if m is None:
        raise MalformedPrefix(f"not a dotted-quad prefix: {text!r}")
    octets = [int(g) for g in m.groups()[:4]]
    if any(o > 255 for o in octets):
        raise MalformedPrefix(f"octet out of range in {text!r}")
    length = int(m.group(5))
    if length > 32:
        raise LengthOutOfRange(f"mask length {length} > 32 in {text!r}")
    address = (octets[0] << 24) | (octets[1] << 16) | (octets[2] << 8) | octets[3]
    return IpPrefix(address, length)


def render_prefix(prefix: IpPrefix) -> str:
    return str(prefix)


def contains(parent: IpPrefix, child: IpPrefix) -> bool:
    return parent.contains(child)


def deaggregate(parent: IpPrefix, max_length: int = DEFAULT_MAX_LENGTH) -> tuple[IpPrefix, IpPrefix]:
    """Split ``parent`` into its two immediate children (low half, high half).

    Raises Unsplittable when the children would be longer than ``max_length``,
    i.e. when announcing them would be filtered by length-limiting upstreams.
    """
    if parent.length >= max_length:
        raise Unsplittable(f"{parent} is already at /{parent.length} (max /{max_length})")
    length = parent.length + 1
    return IpPrefix(parent.address, length), IpPrefix(parent.address | (1 << (32 - length)), length)


@dataclass(frozen=True)
class AsPath:
    """AS path; ``hops[0]`` is the announcing neighbor, ``hops[-1]`` the origin."""

    hops: tuple[int, ...]

    def __post_init__(self):
        if not self.hops:
            raise ValueError("an AS path must not be empty")
        object.__setattr__(self, "hops", tuple(check_asn(h, origin=False) for h in self.hops))

    @classmethod
    def of(cls, hops: Iterable) -> AsPath:
        return cls(tuple(hops))

    def origin(self) -> int:
        return self.hops[-1]

    def first_hop(self) -> int:
        return self.hops[0]

    def has_loop(self) -> bool:
        return len(set(self.hops)) != len(self.hops)

    def prepend(self, asn: int) -> AsPath:
        return AsPath((asn,) + self.hops)

    def __len__(self) -> int:
        return len(self.hops)

    def __contains__(self, asn) -> bool:
        return asn in self.hops

    def __str__(self) -> str:
        return " ".join(str(h) for h in self.hops)

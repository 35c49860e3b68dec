"""Bit vectors and small bit-twiddling helpers.

Points of the n-dimensional Boolean cube are stored as Python ints with
coordinate i (0-based) living at bit position i.  Display strings use the
human convention: the leftmost character is coordinate 1, so ``"1100"``
means x1 = x2 = 1, x3 = x4 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BitVector:
    """An element of {0,1}^n."""

    n: int
    bits: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"negative arity {self.n}")
        if not 0 <= self.bits < (1 << self.n):
            raise ValueError(f"bits {self.bits:#x} out of range for n={self.n}")

    @classmethod
    def from_string(cls, s: str) -> "BitVector":
        """Parse a left-to-right coordinate string like '1100'."""
        if set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        bits = 0
        for i, ch in enumerate(s):
            if ch == "1":
                bits |= 1 << i
        return cls(len(s), bits)

    def to_string(self) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.n))

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return self.bits >> i & 1

    def weight(self) -> int:
        return self.bits.bit_count()

    def with_bit(self, i: int, value: int) -> "BitVector":
        if value:
            return BitVector(self.n, self.bits | (1 << i))
        return BitVector(self.n, self.bits & ~(1 << i))

    def __str__(self) -> str:
        return self.to_string()


def mask_of(coords) -> int:
    """Bitmask with the given coordinate positions set."""
    m = 0
    for c in coords:
        m |= 1 << c
    return m


def coords_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def iter_submasks(mask: int):
    """All submasks of ``mask``, ascending as integers (0 first, mask last)."""
    sub = 0
    while True:
        yield sub
        if sub == mask:
            return
        sub = (sub - mask) & mask


def scatter(value: int, positions: tuple[int, ...]) -> int:
    """Place bit j of ``value`` at positions[j]."""
    out = 0
    for j, p in enumerate(positions):
        if value >> j & 1:
            out |= 1 << p
    return out


def gather(bits: int, positions: tuple[int, ...]) -> int:
    """Inverse of scatter: read positions[j] into bit j of the result."""
    out = 0
    for j, p in enumerate(positions):
        if bits >> p & 1:
            out |= 1 << j
    return out


def as_coalition(members, n: int) -> tuple[int, ...]:
    """Validate and canonicalize a coalition as a sorted tuple of 0-based indices."""
    S = tuple(sorted(set(int(i) for i in members)))
    if S and (S[0] < 0 or S[-1] >= n):
        raise ValueError(f"coalition {S} out of range for n={n}")
    if len(S) != len(tuple(members)) and len(set(members)) != len(tuple(members)):
        raise ValueError(f"coalition has duplicate members: {tuple(members)}")
    return S

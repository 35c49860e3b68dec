"""Benchmark inventory: named functions and protocols for sweeps and tests.

The function zoo fixes one instance of each structured family at n = 16 plus
ten seeded random tables; sweeps iterate it in insertion order so CSV output
is stable.  The protocol zoo carries the standard two-round instances.  All
entries are deterministic: random tables are derived from fixed seeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functions import MultiRoundProtocol, RangedFunction
from .measures import ProductMeasure, biased, uniform

ZOO_N = 16


@dataclass(frozen=True)
class ZooEntry:
    name: str
    function: RangedFunction
    monotone: bool


def _majority_of_first(m: int, n: int) -> RangedFunction:
    """Majority over the first m coordinates, embedded in n (ties to 0)."""
    idx = np.arange(1 << n, dtype=np.int64)
    ones = np.bitwise_count(idx & ((1 << m) - 1))
    return RangedFunction.from_table((ones * 2 > m).astype(np.int8), 2)


def _negated_or(n: int) -> RangedFunction:
    idx = np.arange(1 << n, dtype=np.int64)
    return RangedFunction.from_table((idx == 0).astype(np.int8), 2)


def standard_zoo(n: int = ZOO_N) -> dict[str, ZooEntry]:
    """The benchmark functions, keyed by name, in stable sweep order."""
    entries = [
        ZooEntry("or", RangedFunction.or_function(n), True),
        ZooEntry("and", RangedFunction.and_function(n), True),
        ZooEntry(f"maj{n}", RangedFunction.majority(n), True),
        ZooEntry("maj13", _majority_of_first(13, n), True),
        ZooEntry("maj9", _majority_of_first(9, n), True),
        ZooEntry("parity", RangedFunction.parity(n), False),
        ZooEntry("tribes2", RangedFunction.tribes(2, n), True),
        ZooEntry("tribes4", RangedFunction.tribes(4, n), True),
        ZooEntry("tribes8", RangedFunction.tribes(8, n), True),
        ZooEntry("nor", _negated_or(n), False),
    ]
    entries += [
        ZooEntry(f"random{i}", RangedFunction.random_function(n, 2, seed=1000 + i), False)
        for i in range(10)
    ]
    return {e.name: e for e in entries}


def mixed_instance() -> tuple[RangedFunction, ProductMeasure]:
    """The mixed-bias single-round benchmark: MAJ(x1..x9) XOR OR(x10..x16).

    The first nine coordinates are uniform, the last seven biased at 1/16,
    so the coordinate split lands exactly between the two parts.
    """
    n = 16
    idx = np.arange(1 << n, dtype=np.int64)
    maj = (np.bitwise_count(idx & 0x1FF) * 2 > 9).astype(np.int8)
    orv = (idx >> 9 != 0).astype(np.int8)
    f = RangedFunction.from_table(maj ^ orv, 2)
    return f, ProductMeasure((0.5,) * 9 + (1.0 / 16,) * 7)


def paired_or(n: int = 16) -> RangedFunction:
    """(OR(x), OR(x)) as a 2-bit-range function: values 00 and 11 only."""
    idx = np.arange(1 << n, dtype=np.int64)
    return RangedFunction.from_table(((idx != 0) * 3).astype(np.int8), 4)


def _two_round(outcome_table: np.ndarray, mu1: ProductMeasure,
               mu2: ProductMeasure) -> MultiRoundProtocol:
    f = RangedFunction.from_table(outcome_table, 2)
    return MultiRoundProtocol(f, (mu1, mu2))


def protocol_zoo() -> dict[str, MultiRoundProtocol]:
    """The benchmark protocols, keyed by name, in stable sweep order."""
    n = 8
    idx = np.arange(1 << (2 * n), dtype=np.int64)
    orv = ((idx & 0xFF) != 0).astype(np.int8)
    maj = (np.bitwise_count(idx >> n) * 2 > n).astype(np.int8)
    out: dict[str, MultiRoundProtocol] = {
        "or8-xor-maj8": _two_round(orv ^ maj, biased(1.0 / 8, n), uniform(n)),
        "parity-2x8": MultiRoundProtocol(
            RangedFunction.parity(2 * n), (uniform(n), uniform(n))
        ),
    }
    for i in range(5):
        tbl = RangedFunction.random_function(2 * n, 2, seed=2000 + i).table()
        out[f"random2r-{i}"] = _two_round(tbl, biased(1.0 / 8, n), uniform(n))
    return out

"""Ranged functions on the Boolean cube and multi-round protocols.

A :class:`RangedFunction` maps {0,1}^n to a finite range {0, ..., R-1},
optionally emitting the distinguished sentinel DAGGER (serialized as -1)
which is *not* a range member.  Functions are either explicit truth tables
(n <= 26) or structured forms; structured forms carry both a direct
single-point evaluator and an independent vectorized table builder, and the
two routes are required to agree (tested exhaustively for small n).

Range values for multi-bit ranges embed into ints big-endian: the first bit
of a codeword is its most significant bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bits import BitVector, mask_of
from .errors import ArityError
from .measures import ProductMeasure

DAGGER = -1

MAX_TABLE_N = 26


def _table_dtype(range_size: int):
    if range_size <= 127:
        return np.int8
    if range_size <= 32767:
        return np.int16
    return np.int32


def _popcounts(idx: np.ndarray) -> np.ndarray:
    return np.bitwise_count(idx)


class RangedFunction:
    """A function {0,1}^n -> {0,...,range_size-1} u {DAGGER}."""

    def __init__(self, n: int, range_size: int, kind: str, params: dict, table=None):
        if n < 0:
            raise ValueError(f"negative arity {n}")
        if range_size < 1:
            raise ValueError(f"range size must be >= 1, got {range_size}")
        self.n = n
        self.range_size = range_size
        self.kind = kind
        self.params = params
        self._table = table

    # ----- constructors -------------------------------------------------

    @classmethod
    def from_table(cls, table, range_size: int) -> "RangedFunction":
        arr = np.asarray(table)
        size = arr.shape[0]
        n = int(size).bit_length() - 1
        if size != 1 << n:
            raise ValueError(f"table length {size} is not a power of two")
        if n > MAX_TABLE_N:
            raise ArityError(f"truth table arity {n} exceeds {MAX_TABLE_N}")
        arr = arr.astype(_table_dtype(range_size))
        bad = (arr != DAGGER) & ((arr < 0) | (arr >= range_size))
        if bad.any():
            raise ValueError("table entry outside range and not the undefined sentinel")
        return cls(n, range_size, "table", {}, table=arr)

    @classmethod
    def or_function(cls, n: int) -> "RangedFunction":
        return cls(n, 2, "or", {})

    @classmethod
    def and_function(cls, n: int) -> "RangedFunction":
        return cls(n, 2, "and", {})

    @classmethod
    def majority(cls, n: int) -> "RangedFunction":
        """1 iff strictly more ones than zeros (even-n ties map to 0)."""
        return cls(n, 2, "majority", {})

    @classmethod
    def parity(cls, n: int) -> "RangedFunction":
        return cls(n, 2, "parity", {})

    @classmethod
    def tribes(cls, width: int, n: int) -> "RangedFunction":
        if width < 1 or n % width != 0:
            raise ValueError(f"tribe width {width} must divide n={n}")
        return cls(n, 2, "tribes", {"width": width})

    @classmethod
    def iterated_majority(cls, depth: int) -> "RangedFunction":
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        return cls(3**depth, 2, "itmaj", {"depth": depth})

    @classmethod
    def random_function(
        cls,
        n: int,
        range_size: int,
        seed: int,
        probs=None,
        dagger_prob: float = 0.0,
    ) -> "RangedFunction":
        """Random truth table with per-value probabilities, reproducible from seed."""
        if n > MAX_TABLE_N:
            raise ArityError(f"random table arity {n} exceeds {MAX_TABLE_N}")
        if probs is None:
            probs = [1.0 / range_size] * range_size
        probs = [float(p) for p in probs]
        if len(probs) != range_size:
            raise ValueError("probability vector length must equal range_size")
        if abs(sum(probs) - 1.0) > 1e-9 or min(probs) < 0:
            raise ValueError("probability vector must be a distribution")
        if not 0.0 <= dagger_prob < 1.0:
            raise ValueError(f"dagger probability {dagger_prob} outside [0, 1)")
        return cls(
            n,
            range_size,
            "random",
            {"seed": int(seed), "probs": probs, "dagger_prob": float(dagger_prob)},
        )

    @classmethod
    def constant(cls, n: int, value: int, range_size: int = 2) -> "RangedFunction":
        if not 0 <= value < range_size:
            raise ValueError(f"constant value {value} outside range of size {range_size}")
        return cls(n, range_size, "constant", {"value": int(value)})

    # ----- evaluation ---------------------------------------------------

    def evaluate(self, x: BitVector) -> int:
        if x.n != self.n:
            raise ArityError(f"point has arity {x.n}, function has {self.n}")
        return self.eval_int(x.bits)

    def eval_int(self, x: int) -> int:
        """Single-point evaluation; the slow independent route for structured kinds."""
        k = self.kind
        if k == "or":
            return int(x != 0)
        if k == "and":
            return int(x == (1 << self.n) - 1)
        if k == "majority":
            return int(2 * x.bit_count() > self.n)
        if k == "parity":
            return x.bit_count() & 1
        if k == "tribes":
            w = self.params["width"]
            mask = (1 << w) - 1
            for start in range(0, self.n, w):
                if (x >> start) & mask == mask:
                    return 1
            return 0
        if k == "itmaj":
            vals = [(x >> i) & 1 for i in range(self.n)]
            while len(vals) > 1:
                vals = [
                    int(vals[i] + vals[i + 1] + vals[i + 2] >= 2)
                    for i in range(0, len(vals), 3)
                ]
            return vals[0]
        if k == "constant":
            return self.params["value"]
        if k == "negate":
            return self.params["inner"].eval_int(x ^ self.params["mask"])
        if k == "bundle":
            v = self.params["inner"].eval_int(x)
            return DAGGER if v == DAGGER else self.params["mapping"][v]
        return int(self.table()[x])

    def table(self) -> np.ndarray:
        """Full truth table over 2^n points (cached, read-only)."""
        if self._table is None:
            if self.n > MAX_TABLE_N:
                raise ArityError(f"truth table over 2^{self.n} points is out of budget")
            self._table = self._build_table()
            self._table.setflags(write=False)
        return self._table

    def _build_table(self) -> np.ndarray:
        size = 1 << self.n
        idx = np.arange(size, dtype=np.int64)
        dtype = _table_dtype(self.range_size)
        k = self.kind
        if k == "or":
            return (idx != 0).astype(dtype)
        if k == "and":
            return (idx == size - 1).astype(dtype)
        if k == "majority":
            return (2 * _popcounts(idx) > self.n).astype(dtype)
        if k == "parity":
            return (_popcounts(idx) & 1).astype(dtype)
        if k == "tribes":
            w = self.params["width"]
            mask = (1 << w) - 1
            out = np.zeros(size, dtype=bool)
            for start in range(0, self.n, w):
                out |= (idx >> start) & mask == mask
            return out.astype(dtype)
        if k == "itmaj":
            level = [((idx >> i) & 1).astype(np.int8) for i in range(self.n)]
            while len(level) > 1:
                level = [
                    (level[i] + level[i + 1] + level[i + 2] >= 2).astype(np.int8)
                    for i in range(0, len(level), 3)
                ]
            return level[0].astype(dtype)
        if k == "random":
            rng = np.random.default_rng(self.params["seed"])
            tbl = rng.choice(
                self.range_size, size=size, p=self.params["probs"]
            ).astype(dtype)
            dp = self.params["dagger_prob"]
            if dp > 0:
                tbl[rng.random(size) < dp] = DAGGER
            return tbl
        if k == "constant":
            return np.full(size, self.params["value"], dtype=dtype)
        if k == "negate":
            inner = self.params["inner"].table()
            return inner[idx ^ self.params["mask"]]
        if k == "bundle":
            inner = self.params["inner"].table()
            mapping = np.asarray(self.params["mapping"], dtype=dtype)
            return np.where(inner == DAGGER, dtype(DAGGER), mapping[inner]).astype(dtype)
        raise ValueError(f"unknown function kind {k!r}")

    # ----- misc ---------------------------------------------------------

    def attains(self, b: int) -> bool:
        return bool((self.table() == b).any())

    def dagger_mass(self, measure: ProductMeasure) -> float:
        """Probability of the undefined sentinel under ``measure``."""
        if measure.n != self.n:
            raise ArityError("measure arity does not match function arity")
        return float(measure.mass_vector() @ (self.table() == DAGGER))

    def __repr__(self) -> str:
        return f"RangedFunction({self.kind}, n={self.n}, range={self.range_size})"

    # ----- serialization ------------------------------------------------

    def to_obj(self) -> dict:
        obj = {"kind": self.kind, "n": self.n, "range_size": self.range_size}
        if self.kind == "table":
            obj["table"] = [int(v) for v in self.table()]
        elif self.kind in ("negate", "bundle"):
            obj["inner"] = self.params["inner"].to_obj()
            if self.kind == "negate":
                obj["coords"] = sorted(
                    i for i in range(self.n) if self.params["mask"] >> i & 1
                )
            else:
                obj["mapping"] = list(self.params["mapping"])
        else:
            obj.update(self.params)
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    @classmethod
    def from_obj(cls, obj: dict) -> "RangedFunction":
        kind = obj["kind"]
        n = obj["n"]
        if kind == "table":
            return cls.from_table(np.asarray(obj["table"]), obj["range_size"])
        if kind == "or":
            return cls.or_function(n)
        if kind == "and":
            return cls.and_function(n)
        if kind == "majority":
            return cls.majority(n)
        if kind == "parity":
            return cls.parity(n)
        if kind == "tribes":
            return cls.tribes(obj["width"], n)
        if kind == "itmaj":
            return cls.iterated_majority(obj["depth"])
        if kind == "random":
            return cls.random_function(
                n,
                obj["range_size"],
                obj["seed"],
                probs=obj.get("probs"),
                dagger_prob=obj.get("dagger_prob", 0.0),
            )
        if kind == "constant":
            return cls.constant(n, obj["value"], obj["range_size"])
        if kind == "negate":
            inner = cls.from_obj(obj["inner"])
            return cls(n, obj["range_size"], "negate", {"inner": inner, "mask": mask_of(obj["coords"])})
        if kind == "bundle":
            inner = cls.from_obj(obj["inner"])
            return bundle_range(inner, dict(enumerate(obj["mapping"])))
        raise ValueError(f"unknown function kind {kind!r}")

    @classmethod
    def from_json(cls, text: str) -> "RangedFunction":
        return cls.from_obj(json.loads(text))


def negate_coordinates(f: RangedFunction, measure: ProductMeasure, coords):
    """Flip the given coordinates in both the function and the measure.

    Returns (f', measure') with f'(x) = f(x XOR mask) and biases p_i -> 1 - p_i
    on the flipped coordinates.  Influence quantities are preserved because
    the flip is a measure-preserving bijection of blocks.
    """
    coords = tuple(sorted(set(coords)))
    if coords and (coords[0] < 0 or coords[-1] >= f.n):
        raise ValueError(f"coordinates {coords} out of range for n={f.n}")
    mask = mask_of(coords)
    g = RangedFunction(f.n, f.range_size, "negate", {"inner": f, "mask": mask})
    biases = tuple(
        1.0 - p if i in set(coords) else p for i, p in enumerate(measure.biases)
    )
    return g, ProductMeasure(biases)


def bundle_range(f: RangedFunction, partition: dict) -> RangedFunction:
    """Compose f with a total map from its range onto a smaller range.

    ``partition`` maps every range value to a new value; the undefined
    sentinel is preserved.  The new range size is max(new values) + 1.
    """
    mapping = [None] * f.range_size
    for v, w in partition.items():
        if not 0 <= v < f.range_size:
            raise ValueError(f"partition key {v} outside range of size {f.range_size}")
        if w < 0:
            raise ValueError(f"partition value {w} is negative")
        mapping[v] = int(w)
    if any(m is None for m in mapping):
        missing = [v for v, m in enumerate(mapping) if m is None]
        raise ValueError(f"partition is not total: missing {missing}")
    new_size = max(mapping) + 1
    return RangedFunction(f.n, new_size, "bundle", {"inner": f, "mapping": mapping})


@dataclass(frozen=True)
class MultiRoundProtocol:
    """An r-round n-player protocol with a Boolean outcome.

    Round i (1-based) consumes coordinates (i-1)*n .. i*n - 1 of the outcome
    function's flat input; round bits are drawn from ``round_measures[i-1]``.
    """

    outcome: RangedFunction
    round_measures: tuple[ProductMeasure, ...]

    def __post_init__(self):
        object.__setattr__(self, "round_measures", tuple(self.round_measures))
        if not self.round_measures:
            raise ValueError("protocol needs at least one round")
        n = self.round_measures[0].n
        if any(m.n != n for m in self.round_measures):
            raise ValueError("all rounds must have the same number of players")
        if self.outcome.range_size != 2:
            raise ValueError("protocol outcome must be Boolean")
        if self.outcome.n != n * len(self.round_measures):
            raise ArityError(
                f"outcome arity {self.outcome.n} != rounds*players "
                f"{len(self.round_measures)}*{n}"
            )

    @property
    def n(self) -> int:
        return self.round_measures[0].n

    @property
    def r(self) -> int:
        return len(self.round_measures)

    def evaluate(self, rounds) -> int:
        """Evaluate on per-round BitVectors."""
        if len(rounds) != self.r:
            raise ArityError(f"expected {self.r} rounds, got {len(rounds)}")
        flat = 0
        for i, rv in enumerate(rounds):
            if rv.n != self.n:
                raise ArityError(f"round {i + 1} has arity {rv.n}, expected {self.n}")
            flat |= rv.bits << (i * self.n)
        return self.outcome.eval_int(flat)

    def flat_measure(self) -> ProductMeasure:
        biases = ()
        for m in self.round_measures:
            biases += m.biases
        return ProductMeasure(biases)

    def restrict_first_round(self, x) -> "MultiRoundProtocol":
        """Fix the first round's bits to ``x``; returns an (r-1)-round protocol."""
        if self.r < 2:
            raise ValueError("cannot restrict the only round")
        bits = x.bits if isinstance(x, BitVector) else int(x)
        if not 0 <= bits < (1 << self.n):
            raise ValueError(f"first-round bits {bits:#x} out of range")
        tbl = self.outcome.table().reshape(-1, 1 << self.n)[:, bits]
        g = RangedFunction.from_table(tbl.copy(), 2)
        return MultiRoundProtocol(g, self.round_measures[1:])

    def to_obj(self) -> dict:
        return {
            "n": self.n,
            "r": self.r,
            "outcome": self.outcome.to_obj(),
            "round_measures": [list(m.biases) for m in self.round_measures],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "MultiRoundProtocol":
        return cls(
            RangedFunction.from_obj(obj["outcome"]),
            tuple(ProductMeasure(tuple(b)) for b in obj["round_measures"]),
        )

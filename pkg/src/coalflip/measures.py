"""Product measures on the Boolean cube, with OR-boosting.

A product measure is given by per-coordinate biases p_i = Pr[x_i = 1].
The t-fold boost of a measure is the law of the coordinatewise OR of t
independent samples; for a product measure this has the closed form
p_i' = 1 - (1 - p_i)^t, so boosting never requires drawing t samples.

Non-product measures are supported only through a sampling interface
(:class:`SamplerMeasure`); their boost is realized by OR-composing draws.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bits import BitVector
from .errors import ArityError


@lru_cache(maxsize=16)
def _mass_vector(biases: tuple[float, ...]) -> np.ndarray:
    """Vector of point masses over all 2^n points, index bit i = coordinate i."""
    m = np.ones(1, dtype=np.float64)
    for p in biases:
        m = np.concatenate([m * (1.0 - p), m * p])
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class ProductMeasure:
    """A product measure on {0,1}^n with coordinate biases ``biases``."""

    biases: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "biases", tuple(float(p) for p in self.biases))
        for p in self.biases:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"bias {p} outside [0, 1]")

    @property
    def n(self) -> int:
        return len(self.biases)

    def mass(self, x: BitVector) -> float:
        if x.n != self.n:
            raise ArityError(f"point has arity {x.n}, measure has {self.n}")
        return self.mass_of_int(x.bits)

    def mass_of_int(self, x: int) -> float:
        m = 1.0
        for i, p in enumerate(self.biases):
            m *= p if x >> i & 1 else 1.0 - p
        return m

    def mass_vector(self) -> np.ndarray:
        """All 2^n point masses as a read-only array (index bit i = coordinate i)."""
        if self.n > 26:
            raise ArityError(f"mass vector over 2^{self.n} points is out of budget")
        return _mass_vector(self.biases)

    def boost(self, t: int) -> "ProductMeasure":
        """Law of the coordinatewise OR of t independent samples."""
        if t < 1:
            raise ValueError(f"boost count must be >= 1, got {t}")
        if t == 1:
            return self  # keep biases bit-for-bit identical
        return ProductMeasure(tuple(1.0 - (1.0 - p) ** t for p in self.biases))

    def restrict(self, coords) -> "ProductMeasure":
        """Marginal on the given coordinates (product measures restrict coordinate-wise)."""
        coords = tuple(coords)
        if coords and (min(coords) < 0 or max(coords) >= self.n):
            raise ValueError(f"coordinates {coords} out of range for n={self.n}")
        return ProductMeasure(tuple(self.biases[c] for c in coords))

    def sample(self, rng: np.random.Generator) -> BitVector:
        return BitVector(self.n, self.sample_ints(rng, 1)[0])

    def sample_ints(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points encoded as ints (bit i = coordinate i)."""
        draws = rng.random((size, self.n)) < np.asarray(self.biases)
        weights = 1 << np.arange(self.n, dtype=np.int64)
        return draws @ weights

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "biases": list(self.biases)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProductMeasure":
        obj = json.loads(text)
        if obj.get("n") != len(obj.get("biases", [])):
            raise ValueError("measure JSON: n does not match len(biases)")
        return cls(tuple(obj["biases"]))


class SamplerMeasure:
    """A measure known only through sampling.

    Exact operations (masses, restrictions) are unavailable; boosting is
    realized by OR-composition of independent draws, which matches the
    product closed form when the underlying measure happens to be product.
    """

    def __init__(self, n: int, sample_fn, boost_count: int = 1):
        self.n = n
        self._sample_fn = sample_fn
        self._boost_count = boost_count

    def boost(self, t: int) -> "SamplerMeasure":
        if t < 1:
            raise ValueError(f"boost count must be >= 1, got {t}")
        return SamplerMeasure(self.n, self._sample_fn, self._boost_count * t)

    def sample(self, rng: np.random.Generator) -> BitVector:
        x = 0
        for _ in range(self._boost_count):
            x |= self._sample_fn(rng)
        return BitVector(self.n, x)

    def sample_ints(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.array([self.sample(rng).bits for _ in range(size)], dtype=np.int64)


def uniform(n: int) -> ProductMeasure:
    return ProductMeasure((0.5,) * n)


def biased(p: float, n: int) -> ProductMeasure:
    return ProductMeasure((p,) * n)

"""Coalition and single-variable influence measurement.

The central quantity is the probability, over a point x drawn from a product
measure, that a coalition S can steer the function's value to a target b by
rewriting only its own coordinates: the event "b is attained on the block of
x", where the block B_S(x) is the set of points agreeing with x outside S.

Exact values enumerate assignments of the coordinates outside S only (the
event does not depend on x's S-coordinates), realized as axis reductions over
the function's truth table.  Monte-Carlo estimates carry a two-sided 95%
Hoeffding radius.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bits import BitVector, as_coalition, iter_submasks, mask_of
from .errors import ArityError, BudgetError
from .functions import RangedFunction
from .measures import ProductMeasure

DEFAULT_MC_SAMPLES = 10_000
MAX_EXACT_FREE_COORDS = 24
MAX_BLOCK_COORDS = 26
DEFAULT_RESILIENCE_BUDGET = 60_000_000


def hoeffding_radius(samples: int, confidence: float = 0.95) -> float:
    """Two-sided Hoeffding half-width for a [0,1] sample mean."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * samples))


@dataclass(frozen=True)
class InfluenceEstimate:
    """A measured influence value with its uncertainty radius.

    ``radius`` is the 95% Hoeffding half-width for Monte-Carlo estimates and
    0 for exact computations.
    """

    value: float
    method: str
    samples: int
    radius: float

    def __post_init__(self):
        if self.method not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")

    def to_obj(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "samples": self.samples,
            "radius": self.radius,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "InfluenceEstimate":
        return cls(obj["value"], obj["method"], obj["samples"], obj["radius"])


@dataclass(frozen=True)
class ResilienceVerdict:
    """Outcome of an exhaustive resilience check."""

    resilient: bool
    witness: tuple | None  # (coalition, target) for the first failing pair
    epsilon: float
    ell: int
    checked: int


def _exact(value: float) -> InfluenceEstimate:
    # Mass-weighted table sums can drift a few ulps outside [0, 1]; clamp.
    return InfluenceEstimate(min(1.0, max(0.0, float(value))), "exact", 0, 0.0)


def _reduce_free(arr: np.ndarray, coords: list[int], targets, combine):
    """Reduce ``targets`` out of a flat array indexed by ``coords`` (ascending).

    ``combine(c, lo, hi)`` merges the two slices of coordinate c.  Returns the
    reduced flat array and the remaining coordinate list.
    """
    coords = list(coords)
    for c in sorted(targets, reverse=True):
        pos = coords.index(c)
        stride = 1 << pos
        a = arr.reshape(-1, 2, stride)
        arr = combine(c, a[:, 0, :], a[:, 1, :]).reshape(-1)
        coords.remove(c)
    return arr, coords


def _any_reduce(arr, coords, targets):
    return _reduce_free(arr, coords, targets, lambda c, lo, hi: np.logical_or(lo, hi))


def _expect_reduce(arr, coords, targets, bias_of):
    def combine(c, lo, hi):
        p = bias_of(c)
        return lo * (1.0 - p) + hi * p

    return _reduce_free(arr.astype(np.float64, copy=False), coords, targets, combine)


def block_contains(f: RangedFunction, x, S, b: int) -> bool:
    """Whether target b is attained on the block of x spanned by coalition S."""
    S = as_coalition(S, f.n)
    if len(S) > MAX_BLOCK_COORDS:
        raise BudgetError(f"block over {len(S)} coordinates exceeds {MAX_BLOCK_COORDS}")
    bits = x.bits if isinstance(x, BitVector) else int(x)
    mask = mask_of(S)
    base = bits & ~mask
    for sub in iter_submasks(mask):
        if f.eval_int(base | sub) == b:
            return True
    return False


def _exact_coalition_influence(f, measure, S, b) -> float:
    free = [c for c in range(f.n) if c not in set(S)]
    if len(free) > MAX_EXACT_FREE_COORDS:
        raise BudgetError(
            f"exact influence with {len(free)} free coordinates exceeds "
            f"{MAX_EXACT_FREE_COORDS}; use Monte-Carlo mode"
        )
    hit = f.table() == b
    hit, coords = _any_reduce(hit, list(range(f.n)), S)
    mass = measure.restrict(coords).mass_vector()
    return float(mass @ hit)


def _mc_coalition_influence(f, measure, S, b, samples, rng) -> float:
    if rng is None:
        raise ValueError("Monte-Carlo mode requires an rng")
    rng = np.random.default_rng(rng)
    mask = mask_of(S)
    if f.n <= 26 and len(S) <= 20:
        subs = np.fromiter(iter_submasks(mask), dtype=np.int64) if S else np.zeros(1, dtype=np.int64)
        tbl = f.table()
        hits = 0
        chunk = max(1, (1 << 22) // max(1, len(subs)))
        done = 0
        while done < samples:
            m = min(chunk, samples - done)
            xs = measure.sample_ints(rng, m)
            base = (xs & ~mask)[:, None] | subs[None, :]
            hits += int((tbl[base] == b).any(axis=1).sum())
            done += m
        return hits / samples
    hits = 0
    for _ in range(samples):
        x = measure.sample(rng)
        if block_contains(f, x, S, b):
            hits += 1
    return hits / samples


def coalition_influence(
    f: RangedFunction,
    measure,
    S,
    b: int,
    mode: str = "exact",
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng=None,
) -> InfluenceEstimate:
    """Probability that coalition S can steer f to b, over x ~ measure.

    ``mode`` is "exact" (axis-reduction over the truth table; requires the
    free-coordinate budget and a product measure) or "mc".
    """
    S = as_coalition(S, f.n)
    if getattr(measure, "n", None) != f.n:
        raise ArityError("measure arity does not match function arity")
    if mode == "exact":
        if not isinstance(measure, ProductMeasure):
            raise BudgetError("exact influence requires a product measure")
        return _exact(_exact_coalition_influence(f, measure, S, b))
    if mode == "mc":
        value = _mc_coalition_influence(f, measure, S, b, mc_samples, rng)
        return InfluenceEstimate(value, "monte-carlo", mc_samples, hoeffding_radius(mc_samples))
    raise ValueError(f"unknown mode {mode!r}")


def boosted_influence(
    f: RangedFunction,
    measure,
    S,
    b: int,
    t: int,
    mode: str = "exact",
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng=None,
) -> InfluenceEstimate:
    """Coalition influence with x drawn from the t-fold OR-boost of measure."""
    return coalition_influence(
        f, measure.boost(t), S, b, mode=mode, mc_samples=mc_samples, rng=rng
    )


def variable_influence(f: RangedFunction, measure: ProductMeasure, k: int) -> InfluenceEstimate:
    """Probability that f is not constant on the block of a single coordinate."""
    if not 0 <= k < f.n:
        raise ValueError(f"coordinate {k} out of range for n={f.n}")
    if f.n - 1 > MAX_EXACT_FREE_COORDS:
        raise BudgetError(f"exact variable influence needs n-1 <= {MAX_EXACT_FREE_COORDS}")
    tbl = f.table()
    a = tbl.reshape(-1, 2, 1 << k)
    notconst = (a[:, 0, :] != a[:, 1, :]).reshape(-1)
    coords = [c for c in range(f.n) if c != k]
    mass = measure.restrict(coords).mass_vector()
    return _exact(float(mass @ notconst))


def influence_profile(f: RangedFunction, measure, S, b: int, over) -> np.ndarray:
    """Influence of S toward b in each restriction of f on the ``over`` coordinates.

    Returns an array indexed by assignments of ``over`` (ascending coordinate
    order, bit j of the index = j-th coordinate of ``over``): entry y is the
    influence of S toward b for the function obtained by fixing the ``over``
    coordinates to y, under the measure restricted to the rest.
    """
    S = as_coalition(S, f.n)
    over = tuple(sorted(over))
    if set(S) & set(over):
        raise ValueError("coalition and profile coordinates must be disjoint")
    hit = f.table() == b
    hit, coords = _any_reduce(hit, list(range(f.n)), S)
    rest = [c for c in coords if c not in set(over)]
    biases = measure.biases
    prof, coords = _expect_reduce(hit, coords, rest, lambda c: biases[c])
    assert coords == list(over)
    return prof


def certify_resilience(
    f: RangedFunction,
    measure: ProductMeasure,
    epsilon: float,
    ell: int,
    budget: int = DEFAULT_RESILIENCE_BUDGET,
) -> ResilienceVerdict:
    """Exhaustively check that no coalition of size <= ell reaches influence 1 - epsilon.

    Enumerates coalitions by size then lexicographic order, targets ascending,
    and returns the first witness found, if any.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside (0, 1]")
    if not 0 <= ell <= f.n:
        raise ValueError(f"ell {ell} outside 0..{f.n}")
    work = sum(
        math.comb(f.n, s) * (1 << (f.n - s)) * f.range_size for s in range(ell + 1)
    )
    if work > budget:
        raise BudgetError(f"resilience check needs {work} block evaluations > budget {budget}")
    threshold = 1.0 - epsilon
    checked = 0
    for s in range(ell + 1):
        for S in itertools.combinations(range(f.n), s):
            for b in range(f.range_size):
                checked += 1
                est = coalition_influence(f, measure, S, b)
                if est.value >= threshold:
                    return ResilienceVerdict(False, (S, b), epsilon, ell, checked)
    return ResilienceVerdict(True, None, epsilon, ell, checked)

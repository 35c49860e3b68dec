"""Shared fixtures and independent brute-force oracles.

The oracles here deliberately avoid the library's vectorized reductions:
they enumerate points and completions with explicit Python loops so that
agreement with the fast paths is a real cross-check, not a tautology.
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from coalflip import MultiRoundProtocol, ProductMeasure, RangedFunction


def point_mass(biases, x: int) -> float:
    m = 1.0
    for i, p in enumerate(biases):
        m *= p if (x >> i) & 1 else 1.0 - p
    return m


def brute_influence(f: RangedFunction, measure: ProductMeasure, S, b: int) -> float:
    """Sum over all points of mass times [some completion on S hits b]."""
    S = tuple(S)
    total = 0.0
    for x in range(1 << f.n):
        for assignment in itertools.product((0, 1), repeat=len(S)):
            y = x
            for coord, bit in zip(S, assignment):
                y = (y | (1 << coord)) if bit else (y & ~(1 << coord))
            if f.eval_int(y) == b:
                total += point_mass(measure.biases, x)
                break
    return total


def expectimax_value(F: MultiRoundProtocol, B, b: int) -> float:
    """Game value by direct recursion over rounds: average honest bits, then
    maximize the coalition's reply, using only protocol evaluation."""
    n, r = F.n, F.r
    Bset = set(B)
    goods = [i for i in range(n) if i not in Bset]
    bads = sorted(Bset)

    def rec(round_idx: int, flat: int) -> float:
        if round_idx == r:
            return 1.0 if F.outcome.eval_int(flat) == b else 0.0
        biases = F.round_measures[round_idx].biases
        shift = round_idx * n
        total = 0.0
        for gchoice in itertools.product((0, 1), repeat=len(goods)):
            mass = 1.0
            gbits = 0
            for coord, bit in zip(goods, gchoice):
                mass *= biases[coord] if bit else 1.0 - biases[coord]
                if bit:
                    gbits |= 1 << coord
            best = 0.0
            for bchoice in itertools.product((0, 1), repeat=len(bads)):
                bbits = 0
                for coord, bit in zip(bads, bchoice):
                    if bit:
                        bbits |= 1 << coord
                best = max(best, rec(round_idx + 1, flat | ((gbits | bbits) << shift)))
                if best == 1.0:
                    break
            total += mass * best
        return total

    return rec(0, 0)


def all_coalitions(n: int):
    for mask in range(1 << n):
        yield tuple(i for i in range(n) if (mask >> i) & 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240)

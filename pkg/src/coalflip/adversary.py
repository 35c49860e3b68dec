"""Rushing adversaries for multi-round protocols.

A coalition B plays the following game against a protocol: in each round the
honest players' bits are drawn and broadcast first, then the coalition picks
its own bits for that round knowing everything broadcast so far.  The value
toward a target b is the probability the outcome equals b под optimal play.

The optimum is computed by backward induction over the full broadcast table:
processing rounds last-to-first, maximize over the coalition's coordinates of
the round (they move last within it), then average over the honest
coordinates with their biases.  Strategies are explicit history-keyed tables,
so any strategy — optimal or not — can be evaluated independently.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bits import BitVector, scatter
from .errors import ArityError, BudgetError
from .functions import MultiRoundProtocol
from .influence import InfluenceEstimate, hoeffding_radius
from .measures import ProductMeasure

MAX_DP_SIDE = 22
MAX_DP_TOTAL = 24


@dataclass(frozen=True)
class GameValue:
    """Value of the coalition game, with how it was obtained."""

    value: float
    method: str = "exact"


@dataclass(frozen=True)
class Stage:
    """One rushing step: honest coordinates drawn, then coalition coordinates set.

    A protocol round is normally one stage; internal constructions may split a
    round into finer stages, which only weakens the coalition (its early-stage
    moves see fewer honest bits), so stage-split values lower-bound round values.
    """

    round_idx: int  # 1-based protocol round this stage belongs to
    good: tuple[int, ...]  # global coordinate indices, honest players
    bad: tuple[int, ...]  # global coordinate indices, coalition players


@dataclass
class Strategy:
    """Explicit coalition strategy: per round, history -> coalition assignment.

    Round i's table maps (good broadcasts of rounds 1..i, coalition broadcasts
    of rounds 1..i-1) to the coalition's round-i assignment.  Assignments and
    history entries are ints whose bit j corresponds to the j-th smallest
    coalition (resp. honest) player index.
    """

    n: int
    r: int
    B: tuple[int, ...]
    tables: list[dict] = field(default_factory=list)

    def assignment(self, good_hist: tuple[int, ...], bad_hist: tuple[int, ...]) -> int:
        i = len(good_hist) - 1
        key = (good_hist, bad_hist)
        if key not in self.tables[i]:
            raise KeyError(f"strategy has no entry for round {i + 1} history {key}")
        return self.tables[i][key]

    def to_obj(self) -> dict:
        def enc(hist):
            return ",".join(format(h, "x") for h in hist)

        rounds = []
        for tbl in self.tables:
            rounds.append(
                {
                    f"{enc(g)}|{enc(bh)}": format(a, "x")
                    for (g, bh), a in sorted(tbl.items())
                }
            )
        return {"n": self.n, "r": self.r, "B": [i + 1 for i in self.B], "rounds": rounds}

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    @classmethod
    def from_obj(cls, obj: dict) -> "Strategy":
        def dec(text):
            return tuple(int(h, 16) for h in text.split(",")) if text else ()

        tables = []
        for tbl in obj["rounds"]:
            t = {}
            for key, a in tbl.items():
                g, bh = key.split("|")
                t[(dec(g), dec(bh))] = int(a, 16)
            tables.append(t)
        return cls(obj["n"], obj["r"], tuple(i - 1 for i in obj["B"]), tables)

    @classmethod
    def from_json(cls, text: str) -> "Strategy":
        return cls.from_obj(json.loads(text))


def default_stages(F: MultiRoundProtocol, B) -> list[Stage]:
    Bset = set(B)
    stages = []
    for i in range(F.r):
        coords = range(i * F.n, (i + 1) * F.n)
        good = tuple(c for c in coords if c % F.n not in Bset)
        bad = tuple(c for c in coords if c % F.n in Bset)
        stages.append(Stage(i + 1, good, bad))
    return stages


def check_table_budget(F: MultiRoundProtocol) -> None:
    if F.r * F.n > MAX_DP_TOTAL:
        raise BudgetError(
            f"game DP table over 2^{F.r * F.n} broadcasts exceeds 2^{MAX_DP_TOTAL}"
        )


def check_dp_budget(F: MultiRoundProtocol, B) -> None:
    """Budget for strategy extraction, whose history tables grow with both sides."""
    check_table_budget(F)
    nb = len(set(B))
    if F.r * (F.n - nb) > MAX_DP_SIDE or F.r * nb > MAX_DP_SIDE:
        raise BudgetError(
            f"game DP budget exceeded: r*(n-|B|)={F.r * (F.n - nb)}, "
            f"r*|B|={F.r * nb}, cap {MAX_DP_SIDE}"
        )


def _reduce_stage(arr, coords, stage, biases):
    """Backward-process one stage: max over coalition bits, then average honest bits.

    ``coords`` is the ascending list of not-yet-reduced global coordinates
    indexing ``arr``; the reduced list is returned alongside the array.
    """

    def drop(c, combine):
        nonlocal arr
        pos = coords.index(c)
        a = arr.reshape(-1, 2, 1 << pos)
        arr = combine(a[:, 0, :], a[:, 1, :]).reshape(-1)
        coords.remove(c)

    for c in sorted(stage.bad, reverse=True):
        drop(c, np.maximum)
    for c in sorted(stage.good, reverse=True):
        p = biases[c]
        drop(c, lambda lo, hi, p=p: lo * (1.0 - p) + hi * p)
    return arr, coords


def backward_values(F: MultiRoundProtocol, B, b: int, stages=None, keep_rounds: int = 0):
    """Backward induction, stopping once rounds 1..keep_rounds remain unreduced.

    Returns a flat array indexed by the assembled broadcasts of the kept
    rounds (scalar array of size 1 when keep_rounds=0, i.e. the game value).
    """
    B = tuple(sorted(set(B)))
    check_table_budget(F)
    if stages is None:
        stages = default_stages(F, B)
    biases = F.flat_measure().biases
    arr = (F.outcome.table() == b).astype(np.float64)
    coords = list(range(F.r * F.n))
    for stage in reversed(stages):
        if stage.round_idx <= keep_rounds:
            break
        arr, coords = _reduce_stage(arr, coords, stage, biases)
    if coords != list(range(keep_rounds * F.n)):
        raise ValueError("stage plan does not cover rounds beyond the kept prefix")
    return arr


def stage_suffix_profile(F: MultiRoundProtocol, b: int, stages):
    """Value array over the first stage's coordinates, reducing all later stages.

    Entry u of the returned array is the value of the remaining stages once the
    first stage's coordinates (bit j of u = j-th smallest of them) are fixed.
    Returns (values, first-stage coordinates).
    """
    check_table_budget(F)
    biases = F.flat_measure().biases
    arr = (F.outcome.table() == b).astype(np.float64)
    coords = list(range(F.r * F.n))
    for stage in reversed(stages[1:]):
        arr, coords = _reduce_stage(arr, coords, stage, biases)
    first = sorted(stages[0].good + stages[0].bad)
    if coords != first:
        raise ValueError("later stages do not cover the complement of the first stage")
    return arr, tuple(first)


def optimal_influence(F: MultiRoundProtocol, B, b: int, stages=None) -> GameValue:
    """Exact value of the rushing game for coalition B toward target b."""
    if b not in (0, 1):
        raise ValueError(f"target {b} is not a Boolean outcome")
    arr = backward_values(F, B, b, stages=stages, keep_rounds=0)
    return GameValue(min(1.0, max(0.0, float(arr[0]))), "exact")


def suffix_value_profile(F: MultiRoundProtocol, B, b: int, stages=None) -> np.ndarray:
    """Game value of the suffix protocol after round 1, for every first-round broadcast.

    Entry x of the returned 2^n array is the value coalition B obtains in the
    protocol that remains once round 1's bits are fixed to x.
    """
    if F.r < 2:
        raise ValueError("suffix profile needs at least two rounds")
    return backward_values(F, B, b, stages=stages, keep_rounds=1)


def _round_positions(F, B):
    Bs = tuple(sorted(set(B)))
    good = tuple(i for i in range(F.n) if i not in set(Bs))
    return good, Bs


def extract_optimal_strategy(F: MultiRoundProtocol, B, b: int) -> Strategy:
    """Optimal strategy tables over all reachable histories.

    Argmax ties break toward the lexicographically smallest coalition
    assignment.  Histories with honest draws of probability zero are omitted.
    """
    B = tuple(sorted(set(B)))
    check_dp_budget(F, B)
    good_pos, bad_pos = _round_positions(F, B)
    ng, nb = len(good_pos), len(bad_pos)
    biases = F.flat_measure().biases

    # stage_vals[i] is indexed by assembled broadcasts of rounds 1..i
    stages = default_stages(F, B)
    stage_vals = [None] * (F.r + 1)
    arr = (F.outcome.table() == b).astype(np.float64)
    coords = list(range(F.r * F.n))
    stage_vals[F.r] = arr
    for i in range(F.r, 0, -1):
        arr, coords = _reduce_stage(arr, coords, stages[i - 1], biases)
        stage_vals[i - 1] = arr

    strategy = Strategy(F.n, F.r, B, [dict() for _ in range(F.r)])
    beta_masks = [scatter(beta, bad_pos) for beta in range(1 << nb)]

    def good_mass(i, g):
        m = 1.0
        for j, c in enumerate(good_pos):
            p = biases[i * F.n + c]
            m *= p if g >> j & 1 else 1.0 - p
        return m

    frontier = [((), (), 0)]  # (good_hist, bad_hist, assembled prefix)
    for i in range(F.r):
        vals = stage_vals[i + 1]
        nxt = []
        for good_hist, bad_hist, prefix in frontier:
            for g in range(1 << ng):
                if good_mass(i, g) == 0.0:
                    continue
                base = prefix | (scatter(g, good_pos) << (i * F.n))
                best_beta, best_val = 0, -1.0
                for beta, bmask in enumerate(beta_masks):
                    v = vals[base | (bmask << (i * F.n))]
                    if v > best_val:
                        best_beta, best_val = beta, v
                gh = good_hist + (g,)
                strategy.tables[i][(gh, bad_hist)] = best_beta
                if i + 1 < F.r:
                    nxt.append(
                        (gh, bad_hist + (best_beta,),
                         base | (beta_masks[best_beta] << (i * F.n)))
                    )
        frontier = nxt
    return strategy


def strategy_influence(
    F: MultiRoundProtocol,
    strategy: Strategy,
    b: int,
    mode: str = "exact",
    mc_samples: int = 10_000,
    rng=None,
) -> InfluenceEstimate:
    """Probability the outcome equals b when the coalition plays ``strategy``."""
    if strategy.n != F.n or strategy.r != F.r:
        raise ArityError("strategy shape does not match protocol")
    B = tuple(sorted(set(strategy.B)))
    good_pos, bad_pos = _round_positions(F, B)
    ng = len(good_pos)
    biases = F.flat_measure().biases

    if mode == "exact":
        if F.r * ng > MAX_DP_SIDE:
            raise BudgetError(
                f"exact strategy evaluation enumerates 2^{F.r * ng} honest histories"
            )

        def walk(i, good_hist, bad_hist, assembled, mass):
            if mass == 0.0:
                return 0.0
            if i == F.r:
                return mass * (F.outcome.eval_int(assembled) == b)
            total = 0.0
            for g in range(1 << ng):
                m = mass
                for j, c in enumerate(good_pos):
                    p = biases[i * F.n + c]
                    m *= p if g >> j & 1 else 1.0 - p
                if m == 0.0:
                    continue
                gh = good_hist + (g,)
                beta = strategy.assignment(gh, bad_hist)
                bits = (scatter(g, good_pos) | scatter(beta, bad_pos)) << (i * F.n)
                total += walk(i + 1, gh, bad_hist + (beta,), assembled | bits, m)
            return total

        return InfluenceEstimate(walk(0, (), (), 0, 1.0), "exact", 0, 0.0)

    if mode == "mc":
        if rng is None:
            raise ValueError("Monte-Carlo mode requires an rng")
        rng = np.random.default_rng(rng)
        hits = 0
        round_meas = [
            ProductMeasure(tuple(biases[i * F.n + c] for c in good_pos))
            for i in range(F.r)
        ]
        for _ in range(mc_samples):
            good_hist, bad_hist, assembled = (), (), 0
            for i in range(F.r):
                g = int(round_meas[i].sample_ints(rng, 1)[0]) if ng else 0
                good_hist += (g,)
                beta = strategy.assignment(good_hist, bad_hist)
                bad_hist += (beta,)
                assembled |= (scatter(g, good_pos) | scatter(beta, bad_pos)) << (i * F.n)
            hits += F.outcome.eval_int(assembled) == b
        return InfluenceEstimate(
            hits / mc_samples, "monte-carlo", mc_samples, hoeffding_radius(mc_samples)
        )
    raise ValueError(f"unknown mode {mode!r}")


def coalition_game_budget_ok(F: MultiRoundProtocol, B) -> bool:
    try:
        check_dp_budget(F, B)
        return True
    except BudgetError:
        return False


def rollout_influence(
    F: MultiRoundProtocol,
    B,
    b: int,
    samples: int = 400,
    rng=None,
) -> InfluenceEstimate:
    """Monte-Carlo game value: play the value-maximizing move at every round.

    Each sample draws the honest bits round by round; the coalition answers
    with the assignment maximizing the exact value of the remaining restricted
    protocol (ties to the smallest assignment), so the estimate targets the
    same quantity as the full backward pass while only ever solving
    one-round-shorter restrictions.
    """
    if rng is None:
        raise ValueError("rollout requires an rng")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    B = tuple(sorted(set(B)))
    good_pos, bad_pos = _round_positions(F, B)
    biases = F.flat_measure().biases
    hits = 0
    for _ in range(samples):
        cur = F
        offset = 0
        while True:
            g = 0
            for j, c in enumerate(good_pos):
                if rng.random() < biases[offset * F.n + c]:
                    g |= 1 << j
            gbits = scatter(g, good_pos)
            best_val, best_x = -1.0, 0
            for beta in range(1 << len(bad_pos)):
                x = gbits | scatter(beta, bad_pos)
                if cur.r == 1:
                    val = float(cur.outcome.eval_int(x) == b)
                else:
                    sub = cur.restrict_first_round(BitVector(cur.n, x))
                    val = float(backward_values(sub, B, b)[0])
                if val > best_val:
                    best_val, best_x = val, x
            if cur.r == 1:
                hits += best_val >= 1.0
                break
            cur = cur.restrict_first_round(BitVector(cur.n, best_x))
            offset += 1
    return InfluenceEstimate(
        hits / samples, "monte-carlo", samples, hoeffding_radius(samples)
    )

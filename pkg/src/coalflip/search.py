"""Certified coalition-construction procedures.

Each search here *finds* a candidate coalition by its own sampling or greedy
logic and then has the claim re-checked by an independent certifier (exact
axis-reduction influence when in budget, Monte-Carlo otherwise, or the game
DP for multi-round protocols).  A search never self-reports success: the
returned :class:`SearchOutcome` is SUCCESS only if its recomputed certificate
clears the claimed threshold within its uncertainty radius.  FAILED outcomes
are first-class values carrying the best candidate found and a full trace of
every schedule parameter used.

Desk-scale caveat: the theory's sample-count formulas are honored literally
(with their documented log conventions), which at small n produces boosted
coalitions close to the full player set.  Certificates, not the asymptotics,
decide success.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bits import as_coalition
from .errors import BudgetError, DaggerMassError, PreconditionError
from . import adversary
from .adversary import Stage, optimal_influence
from .functions import DAGGER, MultiRoundProtocol, RangedFunction, negate_coordinates
from .influence import (
    DEFAULT_MC_SAMPLES,
    InfluenceEstimate,
    _any_reduce,
    coalition_influence,
    hoeffding_radius,
    influence_profile,
)
from .measures import ProductMeasure

CONDITION_I = "condition-i"
CONDITION_II = "condition-ii"
CONDITION_NEITHER = "neither"


@dataclass(frozen=True)
class SearchConstants:
    """Tunable leading constants for the sample-count formulas.

    Defaults are the literal constants of the underlying bounds; the CLI can
    scale them.  ``boosted_coeff`` drives k = ceil(coeff * ln(1/eps) / eps)
    for the boosted-coalition sampler, ``range_k_scale`` is the C in the
    ranged-search count k(m, t, eps) = ceil(C * t * m^3 * eps^-2 * ln(t*m/eps))
    (the base case draws from the m=1 form), and ``schedule_scale`` scales
    the multi-round level schedule.
    """

    boosted_coeff: float = 10.0
    range_k_scale: float = 1.0
    schedule_scale: float = 1.0
    electoral_samples: int = 200
    mc_samples: int = DEFAULT_MC_SAMPLES


DEFAULT_CONSTANTS = SearchConstants()


@dataclass(frozen=True)
class SearchOutcome:
    """Result of a coalition search, SUCCESS or FAILED, always with a trace."""

    status: str
    coalition: tuple[int, ...]
    target: int
    certificate: InfluenceEstimate | None
    threshold: float
    trace: dict = field(compare=False, default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "SUCCESS"

    def to_obj(self) -> dict:
        return {
            "status": self.status,
            "coalition": [i + 1 for i in self.coalition],
            "target": self.target,
            "certificate": None if self.certificate is None else self.certificate.to_obj(),
            "threshold": self.threshold,
            "trace": self.trace,
        }


def _outcome(S, b, certificate, threshold, trace) -> SearchOutcome:
    """Build an outcome; SUCCESS only if the certificate clears the threshold."""
    ok = (
        certificate is not None
        and certificate.value + certificate.radius >= threshold
    )
    return SearchOutcome(
        "SUCCESS" if ok else "FAILED",
        tuple(sorted(S)),
        int(b),
        certificate,
        threshold,
        trace,
    )


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("searches require a seeded random source")
    return np.random.default_rng(rng)


def certified_influence(
    f: RangedFunction,
    measure,
    S,
    b: int,
    t: int = 1,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    rng=None,
) -> InfluenceEstimate:
    """Independent certificate for a candidate: exact when in budget, else MC."""
    S = as_coalition(S, f.n)
    meas = measure.boost(t) if t > 1 else measure
    exact_ok = (
        isinstance(meas, ProductMeasure)
        and f.n <= 26
        and f.n - len(S) <= 24
    )
    if exact_ok:
        return coalition_influence(f, meas, S, b)
    return coalition_influence(f, meas, S, b, mode="mc", mc_samples=mc_samples, rng=rng)


def _support(bits: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if bits >> i & 1)


def _value_weights(f: RangedFunction, measure) -> dict[int, float]:
    """Pr[f = b] per value, used to break certificate ties toward the heavy value."""
    if isinstance(measure, ProductMeasure) and f.n <= 26:
        mass = measure.mass_vector()
        tbl = f.table()
        return {b: float(mass @ (tbl == b)) for b in range(f.range_size)}
    return {b: 0.0 for b in range(f.range_size)}


# ---------------------------------------------------------------------------
# boosted coalition sampling
# ---------------------------------------------------------------------------


def boosted_coalition(
    f: RangedFunction,
    measure,
    epsilon: float,
    trials: int = 64,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
) -> SearchOutcome:
    """Sample coalitions from the boosted measure until one certifies.

    The coalition is the support of a draw from the k-fold boost of the
    measure, k = ceil(coeff * ln(1/eps) / eps); both targets are tried.
    """
    if not 0.0 < epsilon <= 0.5:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1/2]")
    if f.range_size != 2:
        raise PreconditionError("boosted search is for Boolean functions; use the ranged search")
    rng = as_generator(rng)
    k = math.ceil(constants.boosted_coeff * math.log(1.0 / epsilon) / epsilon)
    boosted = measure.boost(k)
    threshold = 1.0 - epsilon
    weights = _value_weights(f, measure)
    best = None
    tried = []
    for trial in range(trials):
        S = _support(int(boosted.sample_ints(rng, 1)[0]), f.n)
        chosen = None
        for b in (0, 1):
            est = certified_influence(
                f, measure, S, b, mc_samples=constants.mc_samples, rng=rng
            )
            tried.append({"coalition": [i + 1 for i in S], "target": b, "value": est.value})
            key = (est.value, weights[b])
            if best is None or key > (best[2].value, weights[best[1]]):
                best = (S, b, est)
            if est.value + est.radius >= threshold and (
                chosen is None or key > (chosen[1].value, weights[chosen[0]])
            ):
                chosen = (b, est)
        if chosen is not None:
            trace = {
                "k": k,
                "epsilon": epsilon,
                "trials_used": trial + 1,
                "candidates": tried,
            }
            return _outcome(S, chosen[0], chosen[1], threshold, trace)
    trace = {"k": k, "epsilon": epsilon, "trials_used": trials, "candidates": tried}
    S, b, est = best if best else ((), 0, None)
    return _outcome(S, b, est, threshold, trace)


def prop22_fraction(
    f: RangedFunction,
    measure,
    epsilon: float,
    draws: int = 400,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
) -> dict:
    """Empirical success frequency of boosted-coalition sampling on one function.

    Draws supports S from the k-fold boost and reports the fraction whose
    best-target influence certifies at 1 - eps, together with the binomial
    radius used by the acceptance check (fraction > (1 - eps) - 3 * radius).
    """
    if not 0.0 < epsilon <= 0.5:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1/2]")
    rng = as_generator(rng)
    k = math.ceil(constants.boosted_coeff * math.log(1.0 / epsilon) / epsilon)
    boosted = measure.boost(k)
    supports = boosted.sample_ints(rng, draws)
    hits = 0
    for bits in supports:
        S = _support(int(bits), f.n)
        for b in (0, 1):
            est = certified_influence(f, measure, S, b,
                                      mc_samples=constants.mc_samples, rng=rng)
            if est.value + est.radius >= 1.0 - epsilon:
                hits += 1
                break
    fraction = hits / draws
    sigma = math.sqrt((1.0 - epsilon) * epsilon / draws)
    return {
        "k": k,
        "draws": draws,
        "fraction": fraction,
        "sigma": sigma,
        "bound": (1.0 - epsilon) - 3.0 * sigma,
        "passed": fraction > (1.0 - epsilon) - 3.0 * sigma,
    }


# ---------------------------------------------------------------------------
# condition classification
# ---------------------------------------------------------------------------


def condition_report(
    f: RangedFunction,
    measure,
    epsilon: float,
    b: int,
    outer_samples: int = 400,
    inner_samples: int = 400,
    rng=None,
) -> dict:
    """Nested Monte-Carlo test of the two OR-composition conditions for (f, b).

    Draws outer points x and inner points y, estimates q(x) = Pr_y[f(x|y) = b],
    and checks, with both Hoeffding radii subtracted:

    * condition-i:  Pr_x[q(x) >= 1 - eps] > eps/2
    * condition-ii: Pr_x[q(x) >= eps] >= 1 - eps/2

    Returns the empirical fractions, radii, and both verdicts.
    """
    if not 0.0 < epsilon <= 0.5:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1/2]")
    rng = as_generator(rng)
    xs = measure.sample_ints(rng, outer_samples)
    ys = measure.sample_ints(rng, inner_samples)
    if f.n <= 26:
        tbl = f.table()
        q = (tbl[xs[:, None] | ys[None, :]] == b).mean(axis=1)
    else:
        q = np.array(
            [np.mean([f.eval_int(int(x) | int(y)) == b for y in ys]) for x in xs]
        )
    r_in = hoeffding_radius(inner_samples)
    r_out = hoeffding_radius(outer_samples)
    frac_i = float(np.mean(q - r_in >= 1.0 - epsilon))
    frac_ii = float(np.mean(q - r_in >= epsilon))
    return {
        "frac_i": frac_i,
        "frac_ii": frac_ii,
        "inner_radius": r_in,
        "outer_radius": r_out,
        "condition_i": frac_i - r_out > epsilon / 2.0,
        "condition_ii": frac_ii - r_out >= 1.0 - epsilon / 2.0,
    }


def classify_conditions(
    f: RangedFunction,
    measure,
    epsilon: float,
    b: int,
    outer_samples: int = 400,
    inner_samples: int = 400,
    rng=None,
) -> str:
    """Single-label form of :func:`condition_report`.

    Condition-i is reported when it passes (a constant-b function is the
    canonical case); condition-ii only when condition-i does not also hold.
    """
    rep = condition_report(f, measure, epsilon, b, outer_samples, inner_samples, rng)
    if rep["condition_i"]:
        return CONDITION_I
    if rep["condition_ii"]:
        return CONDITION_II
    return CONDITION_NEITHER


# ---------------------------------------------------------------------------
# bias decomposition
# ---------------------------------------------------------------------------


def decompose_bias(p: float, alpha: float) -> tuple[float, int]:
    """Write a bias p in (alpha, 1/2] as c^t with c in (1/4, 3/4) and t minimal.

    t is the least integer with (1/4)^t < p < (3/4)^t; it never exceeds
    ceil(log4(1/alpha)).
    """
    if not 0.0 < alpha < 0.5:
        raise PreconditionError(f"alpha {alpha} outside (0, 1/2)")
    if not alpha < p <= 0.5:
        raise PreconditionError(f"bias {p} outside (alpha, 1/2] with alpha={alpha}")
    t = 1
    while not (0.25**t < p < 0.75**t):
        t += 1
    c = p ** (1.0 / t)
    assert 0.25 < c < 0.75
    return c, t


# ---------------------------------------------------------------------------
# small-bias searches
# ---------------------------------------------------------------------------


def small_bias_m_bound(n: int, alpha: float, gamma: float) -> int:
    """Coalition-size lower bound ceil(n*log2(1/alpha) / (2*gamma*log2(n)))."""
    if n < 2:
        raise PreconditionError("small-bias bound needs n >= 2")
    return math.ceil(n * math.log2(1.0 / alpha) / (2.0 * gamma * math.log2(n)))


def random_small_bias(
    h: RangedFunction,
    measure: ProductMeasure,
    gamma: float,
    m: int,
    trials: int = 400,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
) -> SearchOutcome:
    """Sample uniform size-m coalitions until one certifies I_S^1 >= 1 - gamma.

    Preconditions: h is Boolean with E[h] >= gamma, all biases lie in
    (0, 1/2], and m meets the size bound at alpha = min bias.
    """
    if h.range_size != 2:
        raise PreconditionError("small-bias search needs a Boolean function")
    if not 0.0 < gamma < 1.0:
        raise PreconditionError(f"gamma {gamma} outside (0, 1)")
    alpha = min(measure.biases)
    if alpha <= 0.0 or max(measure.biases) > 0.5:
        raise PreconditionError("small-bias search needs all biases in (0, 1/2]")
    bound = small_bias_m_bound(h.n, alpha, gamma)
    if m < bound:
        raise PreconditionError(
            f"coalition size m={m} below the bound {bound} at alpha={alpha}, gamma={gamma}"
        )
    if m > h.n:
        raise PreconditionError(f"coalition size m={m} exceeds n={h.n}")
    mean = float(measure.mass_vector() @ (h.table() == 1)) if h.n <= 26 else None
    if mean is not None and mean < gamma:
        raise PreconditionError(f"E[h] = {mean:.6g} below gamma = {gamma}")
    rng = as_generator(rng)
    threshold = 1.0 - gamma
    best = None
    for trial in range(trials):
        S = tuple(sorted(int(i) for i in rng.choice(h.n, size=m, replace=False)))
        est = certified_influence(h, measure, S, 1, mc_samples=constants.mc_samples, rng=rng)
        if best is None or est.value > best[1].value:
            best = (S, est)
        if est.value + est.radius >= threshold:
            trace = {"m": m, "m_bound": bound, "gamma": gamma, "trials_used": trial + 1}
            return _outcome(S, 1, est, threshold, trace)
    S, est = best
    trace = {"m": m, "m_bound": bound, "gamma": gamma, "trials_used": trials}
    return _outcome(S, 1, est, threshold, trace)


def greedy_small_bias(
    f: RangedFunction,
    measure: ProductMeasure,
    epsilon: float,
    b: int,
    budget: int,
    constants: SearchConstants = DEFAULT_CONSTANTS,
) -> SearchOutcome:
    """Greedily fix highest-influence coordinates toward b until Pr[f = b] >= 1 - eps.

    Deterministic: ties pick the lowest coordinate and the 0 assignment.  On
    budget exhaustion the outcome reports the best prefix found; the final
    certificate is the coalition influence of the fixed set, which dominates
    the greedy's conditional probability.
    """
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1)")
    if f.n > 26:
        raise BudgetError("greedy search needs the truth table (n <= 26)")
    mean = float(measure.mass_vector() @ (f.table() == b))
    if mean < epsilon:
        raise PreconditionError(f"Pr[f = b] = {mean:.6g} below epsilon = {epsilon}")
    threshold = 1.0 - epsilon
    tbl = f.table()
    coords = list(range(f.n))
    biases = dict(enumerate(measure.biases))
    assignment: dict[int, int] = {}
    steps = []

    def prob_b(arr, crds):
        mass = ProductMeasure(tuple(biases[c] for c in crds)).mass_vector()
        return float(mass @ (arr == b))

    cur = prob_b(tbl, coords)
    while cur < threshold and len(assignment) < budget and coords:
        best_k, best_inf = None, -1.0
        hit = tbl == b
        for k in coords:
            red, rem = _any_reduce(hit, coords, [k])
            mass = ProductMeasure(tuple(biases[c] for c in rem)).mass_vector()
            inf_k = float(mass @ red)
            if inf_k > best_inf + 1e-15:
                best_k, best_inf = k, inf_k
        pos = coords.index(best_k)
        slices = tbl.reshape(-1, 2, 1 << pos)
        sub = [c for c in coords if c != best_k]
        p0 = prob_b(slices[:, 0, :].reshape(-1), sub)
        p1 = prob_b(slices[:, 1, :].reshape(-1), sub)
        v = 0 if p0 >= p1 else 1
        tbl = slices[:, v, :].reshape(-1)
        coords = sub
        assignment[best_k] = v
        cur = p0 if v == 0 else p1
        steps.append({"coordinate": best_k + 1, "value": v, "prob": cur})
    S = tuple(sorted(assignment))
    est = certified_influence(f, measure, S, b, mc_samples=constants.mc_samples)
    trace = {
        "epsilon": epsilon,
        "budget": budget,
        "assignment": {str(k + 1): v for k, v in sorted(assignment.items())},
        "steps": steps,
        "restricted_prob": cur,
    }
    return _outcome(S, b, est, threshold, trace)


# ---------------------------------------------------------------------------
# single round, mixed biases
# ---------------------------------------------------------------------------


def _restriction_function(f: RangedFunction, fixed_coords, y: int) -> RangedFunction:
    """f with the given coordinates fixed to the bits of y (indexed within fixed_coords)."""
    fixed = tuple(sorted(fixed_coords))
    tbl = f.table()
    coords = list(range(f.n))
    arr = tbl
    for j in range(len(fixed) - 1, -1, -1):
        c = fixed[j]
        pos = coords.index(c)
        arr = arr.reshape(-1, 2, 1 << pos)[:, (y >> j) & 1, :].reshape(-1)
        coords.remove(c)
    return RangedFunction.from_table(arr, f.range_size)


def find_single_round(
    f: RangedFunction,
    measure: ProductMeasure,
    epsilon: float,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
    sub_trials: int = 16,
    t_trials: int = 200,
) -> SearchOutcome:
    """One-round coalition search over a product measure with mixed biases.

    Splits coordinates at alpha0 = 1/log2(n) into a small-bias part A and a
    heavily biased part; elects a sub-coalition and target on the biased part
    by running boosted (or ranged) searches across sampled restrictions and
    keeping the pair that certifies on the largest fraction of them; then
    turns that pair into a Boolean indicator over A and finds a small-bias
    coalition for it (random search with greedy fallback).  The union is
    certified directly at 1 - eps.
    """
    if not 0.0 < epsilon <= 0.5:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1/2]")
    if max(measure.biases) > 0.5:
        raise PreconditionError("biases above 1/2: negate those coordinates first")
    if f.n < 4:
        raise PreconditionError("single-round search needs n >= 4")
    rng = as_generator(rng)
    n = f.n
    alpha0 = 1.0 / math.log2(n)
    A = tuple(i for i, p in enumerate(measure.biases) if alpha0 < p <= 0.5)
    D = tuple(i for i in range(n) if i not in set(A))
    m_bits = max(1, math.ceil(math.log2(f.range_size)))
    threshold = 1.0 - epsilon
    trace: dict = {"alpha0": alpha0, "small_bias_part": [i + 1 for i in A],
                   "biased_part": [i + 1 for i in D], "epsilon": epsilon}

    if not A:
        if f.range_size == 2:
            inner = boosted_coalition(f, measure, epsilon, trials=64, rng=rng, constants=constants)
        else:
            inner = large_range_coalition(f, measure, 1, epsilon, rng=rng, constants=constants)
        trace["route"] = "biased-only"
        trace["inner"] = inner.trace
        return replace(inner, trace=trace)

    mu_A = measure.restrict(A)
    candidates: dict[tuple, int] = {}
    s_elect, b_elect = (), None

    if D:
        mu_D = measure.restrict(D)
        ys = mu_A.sample_ints(rng, constants.electoral_samples)
        subs = rng.spawn(constants.electoral_samples)
        for y, child in zip(ys, subs):
            f_y = _restriction_function(f, A, int(y))
            if f.range_size == 2:
                got = boosted_coalition(f_y, mu_D, epsilon / 2.0, trials=sub_trials,
                                        rng=child, constants=constants)
            else:
                try:
                    got = large_range_coalition(f_y, mu_D, 1, epsilon / 2.0,
                                                rng=child, constants=constants)
                except DaggerMassError:
                    continue
            if got.ok:
                S_glob = tuple(sorted(D[i] for i in got.coalition))
                candidates.setdefault((S_glob, got.target), 0)
        # elect the pair certifying on the largest fraction of the sampled
        # restrictions (profile computed exactly, evaluated at the samples)
        best_frac = -1.0
        for (S_glob, b) in candidates:
            prof = influence_profile(f, measure, S_glob, b, over=A)
            frac = float(np.mean(prof[ys] >= 1.0 - epsilon / 2.0))
            candidates[(S_glob, b)] = frac
            if frac > best_frac:
                best_frac = frac
                s_elect, b_elect = S_glob, b
        trace["election"] = {
            "samples": constants.electoral_samples,
            "candidates": [
                {"coalition": [i + 1 for i in S], "target": b, "fraction": fr}
                for (S, b), fr in candidates.items()
            ],
        }
        if b_elect is None:
            trace["route"] = "election-empty"
            return _outcome((), 0, None, threshold, trace)
    else:
        # no heavily biased part: elect the most likely value outright
        tbl = f.table()
        mass = measure.mass_vector()
        weights = [float(mass @ (tbl == b)) for b in range(f.range_size)]
        b_elect = int(np.argmax(weights))
        trace["election"] = {"route": "majority-value", "weights": weights}

    prof = influence_profile(f, measure, s_elect, b_elect, over=A)
    h_tbl = (prof >= 1.0 - epsilon / 2.0).astype(np.int8)
    h = RangedFunction.from_table(h_tbl, 2)
    gamma = min(epsilon / 2.0, 0.5 ** (m_bits + 1))
    mean_h = float(mu_A.mass_vector() @ h_tbl)
    trace["indicator_mean"] = mean_h
    trace["gamma"] = gamma
    if mean_h < gamma:
        est = certified_influence(f, measure, s_elect, b_elect,
                                  mc_samples=constants.mc_samples, rng=rng)
        trace["route"] = "indicator-too-thin"
        return _outcome(s_elect, b_elect, est, threshold, trace)

    T: tuple[int, ...] = ()
    if mean_h < 1.0 - gamma:
        t_search = None
        if len(A) >= 2:
            m_rsb = small_bias_m_bound(len(A), min(mu_A.biases), gamma)
            if m_rsb <= len(A):
                t_search = random_small_bias(h, mu_A, gamma, m_rsb,
                                             trials=t_trials, rng=rng, constants=constants)
                trace["t_search"] = {"kind": "random", "m": m_rsb, "ok": t_search.ok}
        if t_search is None or not t_search.ok:
            t_search = greedy_small_bias(h, mu_A, gamma, 1, budget=len(A), constants=constants)
            trace["t_search"] = {"kind": "greedy", "ok": t_search.ok,
                                 "assignment": t_search.trace["assignment"]}
        T = tuple(sorted(A[i] for i in t_search.coalition))
    trace["t_coalition"] = [i + 1 for i in T]

    S_final = tuple(sorted(set(s_elect) | set(T)))
    est = certified_influence(f, measure, S_final, b_elect,
                              mc_samples=constants.mc_samples, rng=rng)
    trace["route"] = "combined"
    return _outcome(S_final, b_elect, est, threshold, trace)


# ---------------------------------------------------------------------------
# ranged search (values in {0,1}^m plus the undefined sentinel)
# ---------------------------------------------------------------------------


def aggregate_range_k(m: int, t: int, epsilon: float,
                      constants: SearchConstants = DEFAULT_CONSTANTS) -> int:
    """Closed-form aggregate boost count ceil(C * t * m^3 * eps^-2 * ln(t*m/eps))."""
    return math.ceil(
        constants.range_k_scale * t * m**3 * epsilon**-2 * math.log(t * m / epsilon)
    )


class _SearchMiss(Exception):
    """Internal: a construction stage ran out of retry budget."""

    def __init__(self, trace):
        self.trace = trace
        super().__init__("search stage missed")


def _base_range_case(f, measure, t, epsilon, rng, constants, trials):
    """Boosted search for a single-output-bit function with undefined points.

    Draws S from the m=1 form of the aggregate count, certifies
    I_S^{b, ell} >= 1 - eps for every ell <= t, and elects the target with
    the larger worst-level certificate when both pass.
    """
    k = aggregate_range_k(1, t, epsilon, constants)
    boosted = measure.boost(k)
    threshold = 1.0 - epsilon
    weights = _value_weights(f, measure)
    attempts = []
    best = None
    for trial in range(trials):
        S = _support(int(boosted.sample_ints(rng, 1)[0]), f.n)
        chosen = None
        for b in (0, 1):
            ests = [
                certified_influence(f, measure, S, b, t=ell,
                                    mc_samples=constants.mc_samples, rng=rng)
                for ell in range(1, t + 1)
            ]
            worst = min(e.value + e.radius for e in ests)
            if best is None or (worst, weights[b]) > (best[3], weights[best[1]]):
                best = (S, b, ests, worst)
            if worst >= threshold and (
                chosen is None or (worst, weights[b]) > (chosen[2], weights[chosen[0]])
            ):
                chosen = (b, ests, worst)
        attempts.append({"coalition_size": len(S), "hit": chosen is not None})
        if chosen is not None:
            b, ests, _ = chosen
            return S, b, {"k": k, "epsilon": epsilon, "t": t, "trials_used": trial + 1,
                          "certificates": [e.to_obj() for e in ests]}
    raise _SearchMiss({"k": k, "epsilon": epsilon, "t": t, "attempts": attempts,
                       "best": None if best is None else
                       {"coalition": [i + 1 for i in best[0]], "target": best[1],
                        "worst": best[3]}})


def _first_bit_split(f: RangedFunction, m_bits: int):
    """Split values big-endian: MSB function (with sentinel) and the low bits."""
    tbl = f.table()
    hi = np.where(tbl == DAGGER, DAGGER, tbl >> (m_bits - 1)).astype(np.int8)
    return RangedFunction.from_table(hi, 2), tbl


def _points_over(coords) -> np.ndarray:
    """All 2^k points supported on the given coordinates, ascending as integers."""
    pts = np.zeros(1 << len(coords), dtype=np.int64)
    for j, c in enumerate(sorted(coords)):
        step = 1 << j
        pts[step: 2 * step] = pts[:step] | (1 << c)
    return pts


def _selector_compose(f, f1, b1, S1, m_bits):
    """g(x) = low bits of f at the least completion y in B_{S1}(x) with f1(y) = b1.

    Blocks share their selector point, so g is computed per block and fanned
    out; x with no such completion map to the undefined sentinel.
    """
    n = f.n
    free = [c for c in range(n) if c not in set(S1)]
    sub_pts = _points_over(sorted(S1))
    free_pts = _points_over(free)
    idx = free_pts[:, None] | sub_pts[None, :]
    tbl1 = f1.table()
    match = tbl1[idx] == b1
    has = match.any(axis=1)
    first = np.argmax(match, axis=1)
    ystar = idx[np.arange(idx.shape[0]), first]
    low_mask = (1 << (m_bits - 1)) - 1
    ftbl = f.table()
    gblock = np.where(has, ftbl[ystar] & low_mask, DAGGER).astype(np.int16)
    gfull = np.empty(1 << n, dtype=np.int16)
    gfull[idx] = gblock[:, None]
    return RangedFunction.from_table(gfull, 1 << (m_bits - 1))


def _range_search(f, measure, m_bits, t, epsilon, rng, constants, trials):
    if m_bits == 1:
        S, b, tr = _base_range_case(f, measure, t, epsilon, rng, constants, trials)
        return S, b, {"m": 1, "base": tr}
    eps1 = (epsilon / 8.0) ** 2
    eps2 = epsilon - eps1
    f1, _ = _first_bit_split(f, m_bits)
    S1, b1, tr1 = _base_range_case(f1, measure, 2 * t, eps1, rng, constants, trials)
    g = _selector_compose(f, f1, b1, S1, m_bits)
    S2, b2, tr2 = _range_search(g, measure, m_bits - 1, t, eps2, rng, constants, trials)
    S = tuple(sorted(set(S1) | set(S2)))
    b = (b1 << (m_bits - 1)) | b2
    trace = {
        "m": m_bits,
        "eps1": eps1,
        "eps2": eps2,
        "first_bit": {"coalition": [i + 1 for i in S1], "target": b1, **tr1},
        "rest": tr2,
    }
    return S, b, trace


def large_range_coalition(
    f: RangedFunction,
    measure: ProductMeasure,
    t: int,
    epsilon: float,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
    trials: int = 24,
    combine_retries: int = 4,
) -> SearchOutcome:
    """Coalition search for functions into {0,1}^m (plus the undefined sentinel).

    Requires the undefined-value mass under every boost level ell <= 2t to be
    below eps^4 / 2^16.  Recurses on the most significant output bit: a base
    search fixes (S1, b1), a selector maps each point to its least completion
    achieving b1, the remaining bits are searched on the composed function,
    and the union is certified directly at 1 - eps for every ell <= t.
    """
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1)")
    if t < 1:
        raise PreconditionError(f"t must be >= 1, got {t}")
    if f.range_size < 2:
        raise PreconditionError("range search needs at least two values")
    rng = as_generator(rng)
    m_bits = max(1, math.ceil(math.log2(f.range_size)))
    dagger_threshold = epsilon**4 / 2.0**16
    dagger_masses = []
    for ell in range(1, 2 * t + 1):
        dm = f.dagger_mass(measure.boost(ell))
        dagger_masses.append(dm)
        if dm >= dagger_threshold:
            raise DaggerMassError(
                f"undefined-value mass {dm:.3g} at boost level {ell} is not below "
                f"{dagger_threshold:.3g}"
            )
    threshold = 1.0 - epsilon
    base_trace: dict = {
        "m": m_bits,
        "t": t,
        "epsilon": epsilon,
        "aggregate_k": aggregate_range_k(m_bits, t, epsilon, constants),
        "dagger_masses": dagger_masses,
        "dagger_threshold": dagger_threshold,
    }
    last_miss = None
    for attempt in range(combine_retries):
        try:
            S, b, tr = _range_search(f, measure, m_bits, t, epsilon, rng, constants, trials)
        except _SearchMiss as miss:
            last_miss = miss.trace
            continue
        ests = [
            certified_influence(f, measure, S, b, t=ell,
                                mc_samples=constants.mc_samples, rng=rng)
            for ell in range(1, t + 1)
        ]
        worst = min(ests, key=lambda e: e.value + e.radius)
        trace = dict(base_trace, attempt=attempt + 1, construction=tr,
                     certificates=[e.to_obj() for e in ests])
        if worst.value + worst.radius >= threshold:
            return _outcome(S, b, worst, threshold, trace)
        last_miss = trace
    return _outcome((), 0, None, threshold,
                    dict(base_trace, status="retries-exhausted", last=last_miss))


# ---------------------------------------------------------------------------
# multi-round search
# ---------------------------------------------------------------------------


def iterated_log2(x: float, count: int) -> float:
    """count-fold binary logarithm of x (count = 0 returns x itself)."""
    v = float(x)
    for _ in range(count):
        if v <= 0.0:
            return float("-inf")
        v = math.log2(v)
    return v


def level_schedule(n: int, levels: int, epsilon: float,
                     scale: float = 1.0) -> dict:
    """Per-level parameters of the multi-round construction, 1-indexed by level.

    Level ell counts stages from the end (ell = 1 is the last stage).  Iterated
    logs that fall below 2 at small n are clamped to 2 and flagged; delta
    values are capped at 1.  Returned lists have index 0 unused (None).
    """
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1)")
    if levels < 1 or n < 2:
        raise PreconditionError("schedule needs levels >= 1 and n >= 2")
    L = math.log(1.0 / epsilon)
    out_of_regime = False
    il_deep = iterated_log2(n, 4 * levels)
    if il_deep < 2.0:
        il_deep = 2.0
        out_of_regime = True
    delta0 = scale / il_deep
    if delta0 > 1.0:
        delta0 = 1.0
        out_of_regime = True
    delta: list = [delta0]
    for ell in range(1, levels + 1):
        il = iterated_log2(n, 4 * levels - 4 * ell)
        if il < 2.0:
            il = 2.0
            out_of_regime = True
        d = scale / (L**ell * il)
        if d > 1.0:
            d = 1.0
            out_of_regime = True
        delta.append(d)
    eta = [None] + [delta[ell - 1] for ell in range(1, levels + 1)]
    k = [None] + [
        math.ceil(scale * 4 ** (levels - ell) * n / (il_deep * epsilon**3))
        for ell in range(1, levels + 1)
    ]
    M = [None] + [
        math.ceil((L + levels) / delta[ell - 1]) for ell in range(1, levels + 1)
    ]
    return {
        "delta": delta,
        "eta": eta,
        "k": k,
        "M": M,
        "out_of_regime": out_of_regime,
    }


def _normalize_protocol(F: MultiRoundProtocol):
    """Flip every coordinate whose bias exceeds 1/2; game values are unchanged."""
    flat = F.flat_measure()
    coords = tuple(i for i, p in enumerate(flat.biases) if p > 0.5)
    if not coords:
        return F, coords
    outcome2, flat2 = negate_coordinates(F.outcome, flat, coords)
    measures = tuple(
        ProductMeasure(flat2.biases[i * F.n: (i + 1) * F.n]) for i in range(F.r)
    )
    return MultiRoundProtocol(outcome2, measures), coords


@dataclass(frozen=True)
class _PlanStage:
    round_idx: int  # 1-based protocol round
    coords: tuple[int, ...]  # global coordinates of the stage
    kind: str  # "biased" (p < eta at its level) or "unbiased"

    @property
    def players(self) -> tuple[int, ...]:
        return self.coords


def build_stage_plan(F: MultiRoundProtocol, epsilon: float,
                     scale: float = 1.0) -> tuple[list, dict]:
    """Split rounds whose biases straddle their level's eta into two stages.

    Classification uses a preliminary schedule with one level per round; the
    returned schedule is recomputed over the final stage count.  Within a
    split round the small-bias half is staged first.
    """
    pre = level_schedule(F.n, F.r, epsilon, scale)
    stages: list[_PlanStage] = []
    for i, meas in enumerate(F.round_measures):
        eta = pre["eta"][F.r - i]
        base = i * F.n
        lo = tuple(base + j for j, p in enumerate(meas.biases) if p < eta)
        hi = tuple(base + j for j, p in enumerate(meas.biases) if p >= eta)
        if lo:
            stages.append(_PlanStage(i + 1, lo, "biased"))
        if hi:
            stages.append(_PlanStage(i + 1, hi, "unbiased"))
    schedule = level_schedule(F.n, len(stages), epsilon, scale)
    return stages, schedule


def _adversary_stages(plan, B, n) -> list[Stage]:
    Bset = set(B)
    return [
        Stage(
            st.round_idx,
            tuple(c for c in st.coords if c % n not in Bset),
            tuple(c for c in st.coords if c % n in Bset),
        )
        for st in plan
    ]


def _nu_sample(F, plan, schedule, level, rng, stats) -> tuple[int, ...]:
    """Level-indexed coalition sampler: union of per-stage draws up to `level`.

    The stage at level ell (counting from the last stage) contributes the
    support of one draw from its measure boosted k_ell-fold when the stage is
    biased — rejection-sampled to at most ceil(2 k_ell eta_ell n_stage)
    players — and a uniform subset of size min(k_ell, n_stage) when unbiased
    (clamping recorded).  Level 0 is the empty coalition.
    """
    players: set[int] = set()
    n = F.n
    for ell in range(1, level + 1):
        st = plan[len(plan) - ell]
        meas = ProductMeasure(tuple(F.flat_measure().biases[c] for c in st.coords))
        k = schedule["k"][ell]
        if st.kind == "biased":
            eta = schedule["eta"][ell]
            cap = math.ceil(2.0 * k * eta * len(st.coords))
            boosted = meas.boost(k)
            for attempt in range(1000):
                bits = int(boosted.sample_ints(rng, 1)[0])
                got = [st.coords[j] for j in range(len(st.coords)) if bits >> j & 1]
                if len(got) <= cap:
                    break
                stats["rejections"] = stats.get("rejections", 0) + 1
            else:
                raise BudgetError(
                    f"level {ell} boosted draw never met its size cap {cap}"
                )
        else:
            size = min(k, len(st.coords))
            if size < k:
                stats["k_clamped_levels"] = sorted(
                    set(stats.get("k_clamped_levels", [])) | {ell}
                )
            picks = rng.choice(len(st.coords), size=size, replace=False)
            got = [st.coords[int(j)] for j in picks]
        players.update(c % n for c in got)
    return tuple(sorted(players))


def _game_certificate(F: MultiRoundProtocol, B, b: int, rng,
                      mc_samples: int = 400) -> InfluenceEstimate:
    """Exact game value when the backward pass is in budget, else a rollout."""
    if F.r * (F.n - len(set(B))) <= adversary.MAX_DP_SIDE:
        try:
            val = optimal_influence(F, B, b)
            return InfluenceEstimate(val.value, "exact", 0, 0.0)
        except BudgetError:
            pass
    return adversary.rollout_influence(F, B, b, samples=mc_samples, rng=rng)


def multi_round_coalition(
    F: MultiRoundProtocol,
    epsilon: float,
    rng=None,
    constants: SearchConstants = DEFAULT_CONSTANTS,
    retries: int = 6,
    direct_trials: int = 12,
) -> SearchOutcome:
    """Coalition search against a multi-round protocol, certified by the game DP.

    After negate-normalization and a quick pool over the empty coalition and
    all singletons, the top stage of the plan is attacked by its kind: a
    biased top stage goes through the selector-indicator route (suffix values
    for M sampled sub-coalitions define a ranged table over the first stage,
    searched at eps/2), an unbiased one through the thresholded-indicator
    route (small-bias search on the event that the suffix value clears
    1 - eps/2).  A direct sampling tier backs both up.  Every candidate is
    certified on the original protocol at 1 - eps.
    """
    if not 0.0 < epsilon <= 0.5:
        raise PreconditionError(f"epsilon {epsilon} outside (0, 1/2]")
    if F.r > 3:
        raise PreconditionError(f"multi-round search is desk-scale: r <= 3, got {F.r}")
    if F.r * F.n > adversary.MAX_DP_TOTAL:
        raise BudgetError(
            f"protocol table 2^{F.r * F.n} exceeds the game budget 2^{adversary.MAX_DP_TOTAL}"
        )
    rng = as_generator(rng)
    threshold = 1.0 - epsilon
    n = F.n

    if F.r == 1:
        meas = F.round_measures[0]
        flips = tuple(i for i, p in enumerate(meas.biases) if p > 0.5)
        f1, m1 = negate_coordinates(F.outcome, meas, flips) if flips else (F.outcome, meas)
        inner = find_single_round(f1, m1, epsilon, rng=rng, constants=constants)
        cert = certified_influence(F.outcome, meas, inner.coalition, inner.target,
                                   mc_samples=constants.mc_samples, rng=rng)
        trace = {"route": "single-round", "normalized_coords": [i + 1 for i in flips],
                 "inner": inner.trace}
        return _outcome(inner.coalition, inner.target, cert, threshold, trace)

    Fn, flipped = _normalize_protocol(F)
    plan, schedule = build_stage_plan(Fn, epsilon, constants.schedule_scale)
    L = len(plan)
    trace: dict = {
        "epsilon": epsilon,
        "normalized_coords": [c + 1 for c in flipped],
        "stages": [
            {"round": st.round_idx, "coordinates": [c + 1 for c in st.coords],
             "kind": st.kind}
            for st in plan
        ],
        "schedule": schedule,
    }
    best: tuple | None = None

    def consider(B, b, stage_name) -> SearchOutcome | None:
        nonlocal best
        est = _game_certificate(F, B, b, rng)
        if best is None or est.value > best[2].value:
            best = (B, b, est, stage_name)
        if est.value + est.radius >= threshold:
            trace["route"] = stage_name
            return _outcome(B, b, est, threshold, trace)
        return None

    # quick pool: empty coalition and singletons, exact game values
    pool_checked = 0
    for B in [()] + [(i,) for i in range(n)]:
        for b in (0, 1):
            pool_checked += 1
            hit = consider(B, b, "pool")
            if hit is not None:
                trace["pool_checked"] = pool_checked
                return hit
    trace["pool_checked"] = pool_checked

    top = plan[0]
    mu_top = ProductMeasure(tuple(Fn.flat_measure().biases[c] for c in top.coords))
    eps_top = epsilon / 2.0
    thr_top = 1.0 - eps_top
    stats: dict = {}
    trace["nu_stats"] = stats

    M = min(schedule["M"][L], 128)
    trace["M"] = M
    if M < schedule["M"][L]:
        trace["M_capped"] = True

    if top.kind == "biased":
        for attempt in range(retries):
            Ts = [_nu_sample(Fn, plan, schedule, L - 1, rng, stats) for _ in range(M)]
            oks = []
            for T in Ts:
                stv = _adversary_stages(plan, T, n)
                row = []
                for b in (0, 1):
                    prof, coords = adversary.stage_suffix_profile(Fn, b, stv)
                    row.append(prof >= thr_top)
                oks.append(row)
            h_tbl = np.full(1 << len(top.coords), DAGGER, dtype=np.int32)
            for i in range(M):
                for b in (0, 1):
                    unset = h_tbl == DAGGER
                    h_tbl[unset & oks[i][b]] = 2 * i + b
            m_h = max(1, math.ceil(math.log2(2 * M)))
            h_fn = RangedFunction.from_table(h_tbl, 1 << m_h)
            try:
                got = large_range_coalition(h_fn, mu_top, 1, eps_top, rng=rng,
                                            constants=constants)
            except DaggerMassError as err:
                trace.setdefault("selector_attempts", []).append(
                    {"attempt": attempt + 1, "undefined_mass": str(err)})
                continue
            trace.setdefault("selector_attempts", []).append(
                {"attempt": attempt + 1, "inner_status": got.status,
                 "inner": {kk: got.trace[kk] for kk in ("m", "t", "aggregate_k")
                           if kk in got.trace}})
            if not got.ok:
                continue
            i_star, b_star = got.target >> 1, got.target & 1
            S_players = {top.coords[j] % n for j in got.coalition}
            B = tuple(sorted(S_players | set(Ts[i_star])))
            hit = consider(B, b_star, "selector-indicator")
            if hit is not None:
                return hit
    else:
        delta_prev = schedule["delta"][L - 1]
        eta_top = schedule["eta"][L]
        gamma_eff = min(delta_prev / 4.0, eps_top)
        n1 = len(top.coords)
        for attempt in range(max(retries, M)):
            T = _nu_sample(Fn, plan, schedule, L - 1, rng, stats)
            stv = _adversary_stages(plan, T, n)
            for b in (0, 1):
                prof, coords = adversary.stage_suffix_profile(Fn, b, stv)
                good_mass = float(mu_top.mass_vector() @ (prof >= thr_top))
                if good_mass < delta_prev / 4.0:
                    continue
                h_fn = RangedFunction.from_table(
                    (prof >= thr_top).astype(np.int8), 2)
                t_search = None
                if n1 >= 2:
                    m_cover = math.ceil(
                        n1 * math.log2(1.0 / eta_top) / (delta_prev * math.log2(n1))
                    ) if eta_top < 1.0 else 1
                    m_rsb = small_bias_m_bound(n1, min(mu_top.biases), gamma_eff)
                    m = max(1, m_cover, m_rsb)
                    if m <= n1:
                        t_search = random_small_bias(
                            h_fn, mu_top, gamma_eff, m, rng=rng, constants=constants)
                if t_search is None or not t_search.ok:
                    t_search = greedy_small_bias(
                        h_fn, mu_top, gamma_eff, 1, budget=n1, constants=constants)
                trace.setdefault("threshold_attempts", []).append(
                    {"attempt": attempt + 1, "target": b, "event_mass": good_mass,
                     "t_kind": t_search.trace.get("m", "greedy"),
                     "t_status": t_search.status})
                if not t_search.ok:
                    continue
                S_players = {top.coords[j] % n for j in t_search.coalition}
                B = tuple(sorted(S_players | set(T)))
                hit = consider(B, b, "threshold-indicator")
                if hit is not None:
                    return hit

    # direct tier: full-depth sampled coalitions
    for _ in range(direct_trials):
        B = _nu_sample(Fn, plan, schedule, L, rng, stats)
        for b in (0, 1):
            hit = consider(B, b, "direct")
            if hit is not None:
                return hit

    B, b, est, stage_name = best
    trace["route"] = "exhausted"
    trace["best_stage"] = stage_name
    return _outcome(B, b, est, threshold, trace)

"""Coalition-construction searches: certificates, routes, failure honesty."""
import math

import numpy as np
import pytest

from coalflip import (
    DAGGER,
    MultiRoundProtocol,
    ProductMeasure,
    RangedFunction,
    SearchConstants,
    aggregate_range_k,
    biased,
    boosted_coalition,
    boosted_influence,
    build_stage_plan,
    certified_influence,
    classify_conditions,
    coalition_influence,
    condition_report,
    decompose_bias,
    find_single_round,
    greedy_small_bias,
    large_range_coalition,
    multi_round_coalition,
    optimal_influence,
    prop22_fraction,
    random_small_bias,
    small_bias_m_bound,
    level_schedule,
    uniform,
)
from coalflip.errors import BudgetError, DaggerMassError, PreconditionError
from coalflip.search import (
    CONDITION_I,
    CONDITION_II,
    CONDITION_NEITHER,
    as_generator,
)
from coalflip.zoo import mixed_instance, paired_or, protocol_zoo, standard_zoo

from conftest import brute_influence


def gen(seed=1):
    return np.random.default_rng(seed)


# --- plumbing ---------------------------------------------------------------


def test_as_generator_accepts_seeds_and_generators():
    g = gen(5)
    assert as_generator(g) is g
    assert isinstance(as_generator(12), np.random.Generator)
    with pytest.raises(ValueError):
        as_generator(None)


def test_certified_influence_exact_and_boosted():
    f = RangedFunction.or_function(6)
    mu = biased(0.1, 6)
    est = certified_influence(f, mu, (0, 2), 0, rng=gen())
    assert est.method == "exact"
    assert est.value == pytest.approx(brute_influence(f, mu, (0, 2), 0), abs=1e-12)
    boosted = certified_influence(f, mu, (0, 2), 0, t=3, rng=gen())
    assert boosted.value == pytest.approx(
        brute_influence(f, mu.boost(3), (0, 2), 0), abs=1e-12
    )


# --- boosted sampling (small-range search) ----------------------------------


def test_boosted_coalition_on_or_targets_the_heavy_value():
    f = RangedFunction.or_function(16)
    out = boosted_coalition(f, biased(1 / 16, 16), 0.25, rng=gen(3))
    assert out.ok
    assert out.target == 1
    assert out.certificate.value == 1.0
    assert out.trace["k"] == 56  # ceil(10 ln(4) / 0.25)
    assert out.threshold == 0.75


def test_boosted_k_formula():
    out1 = boosted_coalition(
        RangedFunction.or_function(8), biased(0.1, 8), 0.15, rng=gen(1)
    )
    assert out1.trace["k"] == 127  # ceil(10 ln(1/0.15) / 0.15)


def test_boosted_coalition_is_deterministic_per_seed():
    f = standard_zoo()["tribes4"].function
    mu = biased(1 / 16, 16)
    a = boosted_coalition(f, mu, 0.25, rng=gen(9))
    b = boosted_coalition(f, mu, 0.25, rng=gen(9))
    assert (a.coalition, a.target, a.certificate.value) == (
        b.coalition,
        b.target,
        b.certificate.value,
    )


def test_boosted_coalition_rejects_bad_epsilon():
    f = RangedFunction.or_function(8)
    for eps in (0.0, 0.6, 1.0):
        with pytest.raises(PreconditionError):
            boosted_coalition(f, uniform(8), eps, rng=gen())


def test_prop22_fraction_report_shape():
    f = standard_zoo()["or"].function
    rep = prop22_fraction(f, biased(1 / 16, 16), 0.25, draws=100, rng=gen(5))
    assert rep["k"] == 56 and rep["draws"] == 100
    assert rep["sigma"] == pytest.approx(math.sqrt(0.75 * 0.25 / 100), abs=1e-15)
    assert rep["bound"] == pytest.approx(0.75 - 3 * rep["sigma"], abs=1e-15)
    assert rep["fraction"] == 1.0 and rep["passed"]


def test_prop22_fraction_reports_honest_failure():
    # Forcing k=1 turns boosted draws into plain draws; parity then fails on
    # every empty support, and the empirical fraction drops below the bound.
    f = RangedFunction.parity(8)
    rep = prop22_fraction(
        f,
        biased(0.125, 8),
        0.25,
        draws=800,
        rng=gen(5),
        constants=SearchConstants(boosted_coeff=1e-9),
    )
    assert rep["k"] == 1
    assert not rep["passed"]
    assert rep["fraction"] < rep["bound"]


# --- averaging-argument conditions ------------------------------------------


def test_conditions_on_constant_functions():
    for b in (0, 1):
        f = RangedFunction.constant(6, b)
        assert classify_conditions(f, uniform(6), 0.25, b, rng=gen(2)) == CONDITION_I
        rep = condition_report(f, uniform(6), 0.25, b, rng=gen(2))
        assert rep["condition_i"] and rep["condition_ii"]
        assert rep["frac_i"] == 1.0 and rep["frac_ii"] == 1.0


def test_conditions_on_or_toward_one():
    f = RangedFunction.or_function(16)
    rep = condition_report(f, biased(1 / 16, 16), 0.25, 1, rng=gen(4))
    assert rep["condition_ii"]  # q_1(x) >= eps for nearly every x
    assert rep["frac_ii"] >= 1 - 0.125
    enum = classify_conditions(f, biased(1 / 16, 16), 0.25, 1, rng=gen(4))
    assert enum in (CONDITION_I, CONDITION_II)


def test_conditions_can_fail_both():
    # A dagger-free function whose q_b stays between the two thresholds: the
    # all-but-one-point AND. q_b(x) is tiny for every x, so neither holds.
    f = RangedFunction.and_function(10)
    rep = condition_report(f, uniform(10), 0.25, 1, rng=gen(6))
    assert not rep["condition_i"] and not rep["condition_ii"]
    assert classify_conditions(f, uniform(10), 0.25, 1, rng=gen(6)) == CONDITION_NEITHER


# --- bias decomposition and small-bias coalitions ----------------------------


def test_decompose_bias_roundtrip_grid():
    for alpha in (0.2, 0.05, 0.01):
        step = alpha / 3
        p = alpha + step
        while p <= 0.5:
            c, t = decompose_bias(p, alpha)
            assert 0.25 < c < 0.75
            assert c**t == pytest.approx(p, abs=1e-12)
            assert t <= math.ceil(math.log(1 / alpha, 4))
            p += step


def test_decompose_bias_minimality_and_validation():
    c, t = decompose_bias(0.3, 0.01)
    assert t == 1 and c == pytest.approx(0.3)
    _, t2 = decompose_bias(0.02, 0.01)
    assert t2 >= 2  # 0.02 < 1/4 needs at least two factors
    with pytest.raises(PreconditionError):
        decompose_bias(0.6, 0.2)  # p > 1/2
    with pytest.raises(PreconditionError):
        decompose_bias(0.1, 0.2)  # p <= alpha
    with pytest.raises(PreconditionError):
        decompose_bias(0.3, 0.7)  # alpha outside (0, 1/2)


def test_small_bias_m_bound_reference_point():
    assert small_bias_m_bound(15, 0.5, 0.25) == 8
    assert small_bias_m_bound(16, 0.5, 0.25) == 8  # n/(2 gamma log2 n)
    with pytest.raises(PreconditionError):
        small_bias_m_bound(1, 0.5, 0.25)


def test_random_small_bias_finds_or_coalition():
    h = RangedFunction.or_function(15)
    mu = uniform(15)
    gamma = 0.25
    m = small_bias_m_bound(15, 0.5, gamma)
    out = random_small_bias(h, mu, gamma, m, rng=gen(8))
    assert out.ok and out.target == 1
    assert len(out.coalition) == m
    assert out.certificate.value >= 1 - gamma


def test_random_small_bias_rejects_small_m():
    h = RangedFunction.or_function(15)
    with pytest.raises(PreconditionError):
        random_small_bias(h, uniform(15), 0.25, 7, rng=gen(1))  # bound is 8


def test_random_small_bias_needs_enough_mass():
    h = RangedFunction.and_function(15)  # E[h] = 2^-15, far below gamma
    with pytest.raises(PreconditionError):
        random_small_bias(h, uniform(15), 0.25, 8, rng=gen(1))


def test_greedy_small_bias_fails_honestly_toward_zero_on_or():
    f = RangedFunction.or_function(16)
    out = greedy_small_bias(f, biased(1 / 16, 16), 0.25, 0, budget=5)
    assert out.status == "FAILED"
    assert len(out.coalition) == 5
    assert out.certificate.value == pytest.approx((15 / 16) ** 11, abs=1e-12)


def test_greedy_small_bias_succeeds_toward_one_on_or():
    f = RangedFunction.or_function(16)
    out = greedy_small_bias(f, biased(1 / 16, 16), 0.25, 1, budget=5)
    assert out.ok and len(out.coalition) == 1
    assert out.certificate.value == 1.0


def test_greedy_small_bias_requires_reachable_target():
    f = RangedFunction.constant(8, 1)
    with pytest.raises(PreconditionError):
        greedy_small_bias(f, uniform(8), 0.25, 0, budget=4)


# --- single-round combined search -------------------------------------------


def test_single_round_is_deterministic_per_seed():
    f = RangedFunction.tribes(4, 16)
    a = find_single_round(f, uniform(16), 0.3, rng=gen(7))
    b = find_single_round(f, uniform(16), 0.3, rng=gen(7))
    assert a.ok and b.ok
    assert (a.coalition, a.target) == (b.coalition, b.target)
    assert a.certificate.value == b.certificate.value >= 0.7


def test_single_round_mixed_instance():
    f, mu = mixed_instance()
    out = find_single_round(f, mu, 0.3, rng=gen(1))
    assert out.ok
    assert len(out.coalition) <= 12
    assert out.certificate.value >= 0.7
    assert out.trace["route"] == "combined"
    # the certificate is reproducible through the plain influence operation
    direct = coalition_influence(f, mu, out.coalition, out.target).value
    assert direct == pytest.approx(out.certificate.value, abs=1e-12)


def test_single_round_biased_only_route():
    f = RangedFunction.or_function(16)
    out = find_single_round(f, biased(0.05, 16), 0.3, rng=gen(2))
    assert out.ok and out.trace["route"] == "biased-only"


def test_single_round_small_bias_only_route():
    f = RangedFunction.majority(9)
    out = find_single_round(f, uniform(9), 0.25, rng=gen(3))
    assert out.ok
    assert out.trace["route"] == "combined"
    assert out.trace["election"]["route"] == "majority-value"


def test_single_round_preconditions():
    f = RangedFunction.or_function(8)
    with pytest.raises(PreconditionError):
        find_single_round(f, ProductMeasure((0.7,) * 8), 0.3, rng=gen(1))
    with pytest.raises(PreconditionError):
        find_single_round(RangedFunction.or_function(3), uniform(3), 0.3, rng=gen(1))


# --- ranged search -----------------------------------------------------------


def test_aggregate_range_k_closed_form():
    # ceil(C t m^3 eps^-2 ln(t m / eps))
    want = math.ceil(2 * 8 * (1 / 0.09) * math.log(2 * 2 / 0.3))
    assert aggregate_range_k(2, 2, 0.3) == want
    assert aggregate_range_k(1, 1, 0.5) == math.ceil(4 * math.log(2))


def test_large_range_on_paired_or_picks_the_heavy_pair():
    f = paired_or()
    mu = biased(1 / 16, 16)
    out = large_range_coalition(f, mu, 1, 0.3, rng=gen(4))
    assert out.ok
    assert out.target == 3  # both OR halves pushed to their heavy value 1
    assert out.certificate.value >= 0.7
    # window certificates are honest boosted influences
    direct = boosted_influence(f, mu, out.coalition, 3, 1).value
    assert direct == pytest.approx(out.certificate.value, abs=1e-12)


def test_large_range_two_bit_random_certificates():
    mu = biased(1 / 12, 12)
    f = RangedFunction.random_function(12, 4, seed=100)
    out = large_range_coalition(f, mu, 2, 0.3, rng=gen(5))
    assert out.ok
    for ell, cert in enumerate(out.trace["certificates"], start=1):
        assert cert["value"] >= 0.7
        direct = boosted_influence(f, mu, out.coalition, out.target, ell).value
        assert direct == pytest.approx(cert["value"], abs=1e-12)


def test_large_range_rejects_planted_daggers():
    f = RangedFunction.random_function(12, 4, seed=6, dagger_prob=0.01)
    with pytest.raises(DaggerMassError):
        large_range_coalition(f, uniform(12), 2, 0.3, rng=gen(1))


def test_large_range_requires_multibit_range():
    f = RangedFunction.or_function(8)
    with pytest.raises(PreconditionError):
        large_range_coalition(f, uniform(8), 0, 0.3, rng=gen(1))


# --- multi-round search ------------------------------------------------------


def test_level_schedule_shape():
    sched = level_schedule(64, 3, 0.25)
    # level 0: 1 / log^(12) applied to 64 collapses to the clamp value 2
    assert sched["delta"][0] == 0.5
    assert all(0 < d <= 1 for d in sched["delta"][1:])
    assert sched["eta"][1] == sched["delta"][0]
    assert all(k >= 1 for k in sched["k"][1:])
    assert all(m >= 1 for m in sched["M"][1:])
    # iterated logs collapse at desk scale and the schedule says so
    assert sched["out_of_regime"]


def test_build_stage_plan_classifies_rounds():
    F = protocol_zoo()["or8-xor-maj8"]
    stages, schedule = build_stage_plan(F, 0.3)
    kinds = [(s.kind, len(s.coords)) for s in stages]
    assert kinds[0][0] == "biased"  # round 1 at bias 1/8
    assert kinds[-1][0] == "unbiased"  # round 2 uniform
    assert sum(k[1] for k in kinds) == 16


def test_build_stage_plan_splits_mixed_rounds():
    outcome = RangedFunction.parity(16)
    F = MultiRoundProtocol(
        outcome,
        (ProductMeasure((0.02,) * 4 + (0.5,) * 4), uniform(8)),
    )
    stages, _ = build_stage_plan(F, 0.3)
    first_round = [s for s in stages if s.round_idx == 1]
    assert len(first_round) == 2
    assert first_round[0].kind == "biased" and first_round[1].kind == "unbiased"
    assert first_round[0].coords == (0, 1, 2, 3)


def test_multi_round_on_or_xor_maj():
    F = protocol_zoo()["or8-xor-maj8"]
    out = multi_round_coalition(F, 0.3, rng=gen(2))
    assert out.ok
    assert out.certificate.value >= 0.7
    # certificate equals the exact game value of the returned coalition
    direct = optimal_influence(F, out.coalition, out.target).value
    assert direct == pytest.approx(out.certificate.value, abs=1e-12)


def test_multi_round_parity_control():
    F = protocol_zoo()["parity-2x8"]
    out = multi_round_coalition(F, 0.3, rng=gen(2))
    assert out.ok
    assert len(out.coalition) == 1
    assert out.certificate.value == 1.0


def test_multi_round_single_round_delegates():
    f, mu = mixed_instance()
    F = MultiRoundProtocol(f, (mu,))
    out = multi_round_coalition(F, 0.3, rng=gen(1))
    inner = find_single_round(f, mu, 0.3, rng=gen(1))
    assert out.trace["route"] == "single-round"
    assert out.ok == inner.ok
    assert out.certificate.value == pytest.approx(inner.certificate.value, abs=1e-12)


def test_multi_round_deterministic_per_seed():
    F = protocol_zoo()["random2r-0"]
    a = multi_round_coalition(F, 0.3, rng=gen(6))
    b = multi_round_coalition(F, 0.3, rng=gen(6))
    assert (a.status, a.coalition, a.target) == (b.status, b.coalition, b.target)


def test_multi_round_preconditions():
    F = protocol_zoo()["or8-xor-maj8"]
    with pytest.raises(PreconditionError):
        multi_round_coalition(F, 0.8, rng=gen(1))
    big = MultiRoundProtocol(RangedFunction.parity(26), (uniform(13), uniform(13)))
    with pytest.raises(BudgetError):
        multi_round_coalition(big, 0.3, rng=gen(1))


def test_outcome_serialization_uses_one_based_members():
    f = RangedFunction.or_function(16)
    out = boosted_coalition(f, biased(1 / 16, 16), 0.25, rng=gen(3))
    obj = out.to_obj()
    assert obj["coalition"] == [i + 1 for i in out.coalition]
    assert obj["status"] == "SUCCESS"

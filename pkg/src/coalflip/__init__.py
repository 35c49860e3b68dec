"""Coalition influence in collective coin-flipping: measures, searches, games.

The package models n players broadcasting bits drawn from a product measure,
with a public function of the broadcasts as the shared outcome.  It computes
exact and Monte-Carlo coalition influence, runs certified searches for
influential coalitions (single-round, ranged-output, and multi-round), and
solves the rushing-adversary game exactly by backward induction.
"""
from .bits import BitVector, as_coalition, coords_of, gather, mask_of, scatter
from .errors import (
    ArityError,
    BudgetError,
    CoalflipError,
    ConfigError,
    DaggerMassError,
    PreconditionError,
)
from .measures import ProductMeasure, SamplerMeasure, biased, uniform
from .functions import (
    DAGGER,
    MultiRoundProtocol,
    RangedFunction,
    bundle_range,
    negate_coordinates,
)
from .influence import (
    InfluenceEstimate,
    ResilienceVerdict,
    block_contains,
    boosted_influence,
    certify_resilience,
    coalition_influence,
    hoeffding_radius,
    influence_profile,
    variable_influence,
)
from .adversary import (
    GameValue,
    Stage,
    Strategy,
    backward_values,
    check_dp_budget,
    check_table_budget,
    coalition_game_budget_ok,
    extract_optimal_strategy,
    optimal_influence,
    rollout_influence,
    stage_suffix_profile,
    strategy_influence,
    suffix_value_profile,
)
from .search import (
    SearchConstants,
    SearchOutcome,
    aggregate_range_k,
    boosted_coalition,
    build_stage_plan,
    certified_influence,
    classify_conditions,
    condition_report,
    decompose_bias,
    find_single_round,
    greedy_small_bias,
    large_range_coalition,
    level_schedule,
    multi_round_coalition,
    prop22_fraction,
    random_small_bias,
    small_bias_m_bound,
)
from .zoo import ZooEntry, mixed_instance, paired_or, protocol_zoo, standard_zoo

__version__ = "0.1.0"

__all__ = [
    "ArityError",
    "BitVector",
    "BudgetError",
    "CoalflipError",
    "ConfigError",
    "DAGGER",
    "DaggerMassError",
    "GameValue",
    "InfluenceEstimate",
    "MultiRoundProtocol",
    "PreconditionError",
    "ProductMeasure",
    "RangedFunction",
    "ResilienceVerdict",
    "SamplerMeasure",
    "SearchConstants",
    "SearchOutcome",
    "Stage",
    "Strategy",
    "ZooEntry",
    "aggregate_range_k",
    "as_coalition",
    "backward_values",
    "biased",
    "block_contains",
    "boosted_coalition",
    "boosted_influence",
    "build_stage_plan",
    "bundle_range",
    "certified_influence",
    "certify_resilience",
    "check_dp_budget",
    "check_table_budget",
    "classify_conditions",
    "coalition_game_budget_ok",
    "coalition_influence",
    "condition_report",
    "coords_of",
    "decompose_bias",
    "extract_optimal_strategy",
    "find_single_round",
    "gather",
    "greedy_small_bias",
    "hoeffding_radius",
    "influence_profile",
    "large_range_coalition",
    "level_schedule",
    "mask_of",
    "mixed_instance",
    "multi_round_coalition",
    "negate_coordinates",
    "optimal_influence",
    "paired_or",
    "prop22_fraction",
    "protocol_zoo",
    "random_small_bias",
    "rollout_influence",
    "scatter",
    "small_bias_m_bound",
    "stage_suffix_profile",
    "standard_zoo",
    "strategy_influence",
    "suffix_value_profile",
    "uniform",
    "variable_influence",
]

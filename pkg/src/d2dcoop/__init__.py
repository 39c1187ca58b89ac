"""Cooperative spectrum sharing between D2D pairs and cell-edge users.

Stackelberg pricing per CEU/D2D pair, stable matching by deferred
acceptance, and the Monte Carlo comparison of three pairing schemes.
"""
__version__ = "0.1.0"

from .channel import ChannelGains, ChannelParams, Position, Topology, channel_gain, place_nodes, realize_gains
from .matching import (
    Matching,
    PreferenceList,
    build_preferences,
    deferred_acceptance,
    enumerate_stable_matchings,
    find_blocking_pairs,
    random_matching,
)
from .rates import LinkBudget, cooperative_rates, direct_rate, pair_budget
from .simulation import SCHEMES, DropMetrics, ScenarioConfig, SweepResult, run_drop, run_sweep
from .stackelberg import (
    CandidatePrices,
    GameParams,
    PairOutcome,
    best_response_alpha,
    candidate_prices,
    feasible,
    fixed_price_outcome,
    oracle_equilibrium,
    solve_equilibrium,
)

"""Monte Carlo drops of the CEU/D2D cooperation scenario under three schemes.

Schemes:

* ``proposed``: Stackelberg prices per pair, stable matching by deferred acceptance.
* ``random_stackelberg``: Stackelberg prices per pair, random matching.
* ``stable_fixed_price``: one fixed price for every pair, stable matching.

Each drop owns a random stream derived from ``(master_seed, drop_index)``
only, so for a given drop index every scheme and every D2D count sees the
same CEU placement and fading (common random numbers). Within a drop the
stream is split into independent children for placement, fading and the
random matching.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .channel import ChannelParams, place_nodes, realize_gains
from .matching import Matching, build_preferences, deferred_acceptance, random_matching
from .rates import budget_arrays, direct_rate
from .stackelberg import ZERO_TOL, GameParams, default_fixed_price, solve_batch

SCHEMES = ("proposed", "random_stackelberg", "stable_fixed_price")


class DropError(RuntimeError):
    def __init__(self, n: int, drop_index: int, cause: Exception):
        super().__init__(f"drop failed (n={n}, drop_index={drop_index}): {cause}")
        self.n = n
        self.drop_index = drop_index


@dataclass(frozen=True)
class ScenarioConfig:
    channel: ChannelParams = field(default_factory=ChannelParams)
    game: GameParams = field(default_factory=GameParams)
    m: int = 20
    n_values: tuple[int, ...] = (5, 10, 15, 20, 25, 30, 35, 40)
    drops: int = 500
    scheme: str = "proposed"
    c_fixed: float | None = None  # None -> b2*P_D/2 + b1
    master_seed: int = 0
    condition_outage: bool = True
    unmatched_rate: str = "direct"  # "direct" or "zero": what unmatched CEUs add to the sum-rate

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if any(n < 0 for n in self.n_values):
            raise ValueError("n_values must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.unmatched_rate not in ("direct", "zero"):
            raise ValueError("unmatched_rate must be 'direct' or 'zero'")
        if self.channel.N0 != self.game.n0:
            raise ValueError("channel.N0 and game.n0 must agree")

    @property
    def fixed_price(self) -> float:
        return default_fixed_price(self.game) if self.c_fixed is None else float(self.c_fixed)


@dataclass(frozen=True)
class DropMetrics:
    ceu_total_utility: float
    d2d_total_utility: float
    ceu_sum_rate: float
    d2d_sum_rate: float
    outage_fraction: float
    matched_count: int


METRICS = tuple(f.name for f in fields(DropMetrics))


@dataclass(frozen=True)
class CellStats:
    mean: float
    stderr: float  # nan when drops == 1
    drops: int


@dataclass
class SweepResult:
    config: ScenarioConfig
    schemes: tuple[str, ...]
    cells: dict[tuple[str, int], dict[str, CellStats]] = field(default_factory=dict)
    samples: dict[tuple[str, int], list[DropMetrics]] = field(default_factory=dict)

    def stat(self, scheme: str, n: int, metric: str) -> CellStats:
        return self.cells[(scheme, n)][metric]

    def values(self, scheme: str, n: int, metric: str) -> np.ndarray:
        return np.array([getattr(d, metric) for d in self.samples[(scheme, n)]], dtype=float)


def drop_streams(master_seed: int, drop_index: int) -> dict[str, np.random.Generator]:
    """Independent generators for one drop, keyed by purpose."""
    root = np.random.SeedSequence(master_seed, spawn_key=(drop_index,))
    place, fade, match = root.spawn(3)
    return {"place": np.random.default_rng(place),
            "fade": np.random.default_rng(fade),
            "match": np.random.default_rng(match)}


@dataclass
class DropState:
    """Everything one drop computes before metrics, kept for tracing."""

    topology: object
    gains: object
    budgets: dict[str, np.ndarray]
    outcomes: dict[str, dict[str, np.ndarray]]  # "stackelberg" / "fixed"
    preferences: dict[str, tuple]
    matchings: dict[str, Matching]
    logs: dict[str, list]


def _outcome_kind(scheme: str) -> str:
    return "fixed" if scheme == "stable_fixed_price" else "stackelberg"


def prepare_drop(config: ScenarioConfig, n: int, drop_index: int,
                 schemes=SCHEMES, with_logs: bool = False) -> DropState:
    streams = drop_streams(config.master_seed, drop_index)
    ch, game = config.channel, config.game
    topo = place_nodes(ch, config.m, n, streams["place"])
    gains = realize_gains(topo, ch, streams["fade"], config.condition_outage, game.p_c, game.r_th)
    budgets = budget_arrays(gains, game.p_c, game.p_d, game.n0)

    outcomes, prefs, matchings, logs = {}, {}, {}, {}
    for scheme in schemes:
        kind = _outcome_kind(scheme)
        if kind not in outcomes:
            c_fixed = config.fixed_price if kind == "fixed" else None
            outcomes[kind] = solve_batch(budgets["r_c"], budgets["r_d"], game, c_fixed)
            prefs[kind] = build_preferences(outcomes[kind], topo, ch.relay_range)
        ceu_prefs, d2d_prefs = prefs[kind]
        if scheme == "random_stackelberg":
            matchings[scheme] = random_matching(ceu_prefs, d2d_prefs, streams["match"])
        else:
            log = [] if with_logs else None
            matchings[scheme] = deferred_acceptance(ceu_prefs, d2d_prefs, log)
            logs[scheme] = log
    return DropState(topo, gains, budgets, outcomes, prefs, matchings, logs)


def drop_metrics(config: ScenarioConfig, state: DropState, scheme: str) -> DropMetrics:
    out = state.outcomes[_outcome_kind(scheme)]
    mu = state.matchings[scheme]
    m = config.m
    direct = direct_rate(config.game.p_c, state.gains.h_ib, config.game.n0)
    if config.unmatched_rate == "zero":
        effective = np.zeros(m)
    else:
        effective = np.array(direct, dtype=float)
    ceu_u = d2d_u = d2d_rate = 0.0
    for i, j in mu.pairs():
        effective[i] = out["r_ceu"][i, j]
        ceu_u += out["u_ceu"][i, j]
        d2d_u += out["u_d2d"][i, j]
        d2d_rate += out["r_d2d"][i, j]
    in_outage = np.array(direct < config.game.r_th - ZERO_TOL)
    for i, j in mu.pairs():
        in_outage[i] = out["r_ceu"][i, j] < config.game.r_th - ZERO_TOL
    return DropMetrics(
        ceu_total_utility=float(ceu_u),
        d2d_total_utility=float(d2d_u),
        ceu_sum_rate=float(effective.sum()),
        d2d_sum_rate=float(d2d_rate),
        outage_fraction=float(in_outage.mean()),
        matched_count=len(mu),
    )


def _drop_all(config: ScenarioConfig, n: int, drop_index: int, schemes) -> dict[str, DropMetrics]:
    try:
        state = prepare_drop(config, n, drop_index, schemes)
        return {s: drop_metrics(config, state, s) for s in schemes}
    except Exception as exc:
        raise DropError(n, drop_index, exc) from exc


def run_drop(config: ScenarioConfig, n: int, drop_index: int, scheme: str | None = None) -> DropMetrics:
    """Metrics of one drop with ``n`` D2D pairs under ``scheme`` (default: the config's)."""
    scheme = scheme or config.scheme
    return _drop_all(config, n, drop_index, (scheme,))[scheme]


def _task(args):
    config, n, drop_index, schemes = args
    return _drop_all(config, n, drop_index, schemes)


def _summarize(values: np.ndarray) -> CellStats:
    mean = float(np.mean(values))
    if values.size < 2:
        return CellStats(mean, float("nan"), int(values.size))
    return CellStats(mean, float(np.std(values, ddof=1) / math.sqrt(values.size)), int(values.size))


def run_sweep(config: ScenarioConfig, schemes=None, workers: int = 1) -> SweepResult:
    """Mean and standard error of every metric for each (scheme, n) cell.

    Drops are independent tasks; results are collected in drop-index order
    before aggregation, so the output does not depend on ``workers``.
    """
    schemes = tuple(schemes) if schemes is not None else (config.scheme,)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    tasks = [(config, n, d, schemes) for n in config.n_values for d in range(config.drops)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_task(t) for t in tasks]

    result = SweepResult(config, schemes)
    for s in schemes:
        for n in config.n_values:
            result.samples[(s, n)] = []
    for (_, n, _, _), per_scheme in zip(tasks, results):
        for s in schemes:
            result.samples[(s, n)].append(per_scheme[s])
    for key, drops in result.samples.items():
        result.cells[key] = {
            metric: _summarize(np.array([getattr(d, metric) for d in drops], dtype=float))
            for metric in METRICS
        }
    return result

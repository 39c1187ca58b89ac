"""Randomized cross-checks of the closed forms against brute-force oracles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matching import (
    PreferenceList,
    ceu_weakly_prefers,
    deferred_acceptance,
    enumerate_stable_matchings,
    find_blocking_pairs,
)
from .rates import LinkBudget
from .stackelberg import (
    ZERO_TOL,
    GameParams,
    best_response_alpha,
    d2d_utility,
    feasible,
    oracle_follower,
    oracle_leader,
    solve_equilibrium,
    threshold_price,
)


def sample_game(rng: np.random.Generator, base: GameParams | None = None) -> GameParams:
    """Random game constants; with ``base`` only the rate requirement is kept fixed."""
    if base is not None and rng.random() < 0.5:
        return base
    r_th = base.r_th if base is not None else rng.uniform(0.3, 3.0)
    return GameParams(
        beta1=rng.uniform(0.2, 3.0),
        beta2=rng.uniform(0.5, 40.0),
        p_c=0.1,
        p_d=rng.uniform(0.02, 0.5),
        n0=base.n0 if base is not None else 1e-15,
        r_th=r_th,
    )


def sample_instance(rng: np.random.Generator, base: GameParams | None = None,
                    max_tries: int = 10_000) -> tuple[LinkBudget, GameParams]:
    """A random feasible (budget, game) pair.

    ``r_d`` stays below ``10*e`` so that every candidate price lies inside
    the oracle grid ``[0, c_under + 10*beta1]``.
    """
    for _ in range(max_tries):
        game = sample_game(rng, base)
        r_c = rng.uniform(2.0 * game.r_th, 8.0 * game.r_th)
        r_d = rng.uniform(0.5, 27.0)
        budget = LinkBudget(direct_rate=0.0, r1=r_c, r2=r_c, r_c=r_c, r_d=r_d)
        if feasible(budget, game):
            return budget, game
    raise RuntimeError("could not sample a feasible instance")


def follower_gap(c: float, budget: LinkBudget, game: GameParams, step: float,
                 perturb: float = 0.0) -> float:
    """Grid-search follower optimum minus U_D at the closed-form allocation."""
    alpha = best_response_alpha(c, budget, game) + perturb
    _, u_grid = oracle_follower(c, budget, game, step)
    return u_grid - float(d2d_utility(alpha, c, budget.r_d, game))


def leader_gap(budget: LinkBudget, game: GameParams, step: float) -> float:
    """Grid-search leader optimum minus U_C at the closed-form equilibrium."""
    c_max = float(threshold_price(budget.r_c, game)) + 10.0 * game.beta1
    _, u_grid = oracle_leader(budget, game, step, c_max)
    return u_grid - solve_equilibrium(budget, game).u_ceu


def random_preferences(rng: np.random.Generator, m: int, n: int, p_accept: float = 0.7):
    acceptable = rng.random((m, n)) < p_accept
    ceu = [PreferenceList(i, tuple(int(j) for j in rng.permutation(np.flatnonzero(acceptable[i]))))
           for i in range(m)]
    d2d = [PreferenceList(j, tuple(int(i) for i in rng.permutation(np.flatnonzero(acceptable[:, j]))))
           for j in range(n)]
    return ceu, d2d


@dataclass
class Check:
    name: str
    tolerance: float
    runs: int = 0
    failures: int = 0
    worst: float = 0.0
    dumps: list[str] = field(default_factory=list)

    def record(self, deviation: float, dump: str):
        self.runs += 1
        self.worst = max(self.worst, deviation)
        if not deviation <= self.tolerance:
            self.failures += 1
            if len(self.dumps) < 5:
                self.dumps.append(dump)

    def line(self) -> str:
        status = "PASS" if self.failures == 0 else "FAIL"
        return (f"{status} {self.name}: {self.runs - self.failures}/{self.runs} ok, "
                f"worst deviation {self.worst:.3e} (tolerance {self.tolerance:.1e})")


def run_verification(instances: int, grid_alpha: float = 1e-5, grid_c: float = 1e-4,
                     seed: int = 0, base: GameParams | None = None,
                     matching_instances: int = 200, perturb_alpha: float = 0.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    follower = Check("follower best response vs alpha grid", 10 * grid_alpha)
    leader = Check("leader price vs price grid", 10 * grid_c)
    prop2 = Check("zero follower payoff when beta2*P_D < 2*beta1", ZERO_TOL)
    stable = Check("deferred acceptance vs enumeration", 0.0)

    for _ in range(instances):
        budget, game = sample_instance(rng, base)
        dump = f"budget={budget} game={game}"
        c = rng.uniform(0.0, 2.0 * float(threshold_price(budget.r_c, game)))
        follower.record(abs(follower_gap(c, budget, game, grid_alpha, perturb_alpha)), f"{dump} c={c!r}")
        leader.record(abs(leader_gap(budget, game, grid_c)), dump)
        if game.relay_cost < 2 * game.beta1:
            out = solve_equilibrium(budget, game)
            u_d = float(d2d_utility(out.alpha_star, out.c_star, budget.r_d, game))
            prop2.record(abs(u_d), f"{dump} outcome={out}")

    for _ in range(matching_instances):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        ceu, d2d = random_preferences(rng, m, n)
        mu = deferred_acceptance(ceu, d2d)
        stable_set = enumerate_stable_matchings(ceu, d2d)
        ok = (not find_blocking_pairs(mu, ceu, d2d) and mu in stable_set
              and all(ceu_weakly_prefers(mu, other, ceu) for other in stable_set))
        stable.record(0.0 if ok else 1.0, f"ceu={[p.ranked for p in ceu]} d2d={[p.ranked for p in d2d]}")
    return [follower, leader, prop2, stable]

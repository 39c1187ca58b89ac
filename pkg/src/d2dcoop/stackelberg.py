"""Per-pair pricing game between a CEU (leader) and a D2D pair (follower).

The CEU sets a price ``c`` for use of its channel, the D2D pair answers
with the allocation ``alpha`` that maximizes its own payoff

    U_D(alpha, c) = b1*ln((1 - 2*alpha)*r_d) - b2*P_D*alpha - c*(1 - 2*alpha)

subject to ``alpha*r_c >= R_th`` and ``0 < alpha < 1/2``, and the CEU picks
the price maximizing

    U_C(alpha, c) = b1*ln(alpha*r_c) + c*(1 - 2*alpha)

subject to ``U_D >= 0`` and ``c >= 0``. The closed-form solution is found by
backward induction; :func:`oracle_equilibrium` is a brute-force grid search
over the same two problems used to check it.

Every solver comes in two shapes: scalar functions on a
:class:`~d2dcoop.rates.LinkBudget`, and :func:`solve_batch`, which runs the
identical closed form over arrays of budgets for the Monte Carlo runner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rates import LinkBudget

ZERO_TOL = 1e-9


class InfeasiblePairError(ValueError):
    """The follower problem has no solution for this budget."""


@dataclass(frozen=True)
class GameParams:
    """Economic and physical constants of the game.

    Satisfaction of both players is ``ln`` of their rate.
    """

    beta1: float = 1.0   # revenue per unit of satisfaction
    beta2: float = 10.0  # cost per unit of relay energy
    p_c: float = 0.1     # CEU transmit power, W
    p_d: float = 0.1     # DT transmit power, W
    n0: float = 10 ** (-114 / 10) / 1000  # W
    r_th: float = float(np.log2(1 + 10**0.5))  # bits/s/Hz, 5 dB SNR requirement

    def __post_init__(self):
        for name in ("beta1", "beta2", "p_c", "p_d", "n0", "r_th"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def relay_cost(self) -> float:
        """``beta2 * P_D``, the follower's marginal relay energy cost."""
        return self.beta2 * self.p_d


@dataclass(frozen=True)
class CandidatePrices:
    c1: float
    c2: float  # nan when beta2*P_D == 2*beta1
    c_bar: float
    c_under: float
    candidate_set: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class PairOutcome:
    feasible: bool = False
    c_star: float = 0.0
    alpha_star: float = 0.0
    u_ceu: float = 0.0
    u_d2d: float = 0.0
    r_ceu: float = 0.0
    r_d2d: float = 0.0


INFEASIBLE = PairOutcome()


# -- payoffs -----------------------------------------------------------------

def d2d_utility(alpha, c, r_d, params: GameParams):
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (params.beta1 * np.log((1.0 - 2.0 * alpha) * r_d)
                - params.relay_cost * alpha - c * (1.0 - 2.0 * alpha))


def ceu_utility(alpha, c, r_c, params: GameParams):
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return params.beta1 * np.log(alpha * r_c) + c * (1.0 - 2.0 * alpha)


# -- closed form -------------------------------------------------------------

def _participation_surplus(r_c, r_d, params: GameParams):
    """Follower payoff at the minimum allocation and zero price."""
    share = params.r_th / r_c
    with np.errstate(divide="ignore", invalid="ignore"):
        return params.beta1 * np.log((1.0 - 2.0 * share) * r_d) - params.relay_cost * share


def _feasible(r_c, r_d, params: GameParams):
    r_c = np.asarray(r_c, dtype=float)
    ok = r_c > 2.0 * params.r_th
    surplus = np.where(ok, _participation_surplus(np.where(ok, r_c, 1.0), r_d, params), -np.inf)
    return ok & (surplus >= 0.0)


def feasible(budget: LinkBudget, params: GameParams) -> bool:
    """Whether cooperation can satisfy both the rate requirement and the D2D pair."""
    return bool(_feasible(budget.r_c, budget.r_d, params))


def threshold_price(r_c, params: GameParams):
    # price above which the follower moves off the minimum allocation
    return params.relay_cost / 2.0 + params.beta1 * r_c / (r_c - 2.0 * params.r_th)


def _alpha_star(c, r_c, params: GameParams):
    c = np.asarray(c, dtype=float)
    low = params.r_th / r_c
    with np.errstate(divide="ignore", invalid="ignore"):
        high = 0.5 - params.beta1 / (2.0 * c - params.relay_cost)
    return np.where(c <= threshold_price(r_c, params), low, high)


def best_response_alpha(c: float, budget: LinkBudget, params: GameParams) -> float:
    """Follower's optimal allocation for price ``c``.

    Returns ``R_th/r_c`` up to the threshold price
    ``b2*P_D/2 + b1*r_c/(r_c - 2R_th)`` and ``1/2 - b1/(2c - b2*P_D)`` above it.
    """
    if not feasible(budget, params):
        raise InfeasiblePairError(f"no feasible allocation for {budget}")
    if c < 0:
        raise ValueError(f"price must be non-negative, got {c!r}")
    return float(_alpha_star(c, budget.r_c, params))


def _candidates(r_c, r_d, params: GameParams):
    """Candidate prices and their membership masks, shape ``(..., 4)``.

    Column order is ``(c1, c2, c_bar, c_under)``. Also returns a mask telling
    which ``c1`` values are roots of the follower payoff.
    """
    b1, cost = params.beta1, params.relay_cost
    share = params.r_th / r_c
    c_under = threshold_price(r_c, params)
    c_zero = _participation_surplus(r_c, r_d, params) / (1.0 - 2.0 * share)
    c1 = np.minimum(c_under, c_zero)
    c1_is_root = c_zero <= c_under
    c_bar = cost / 2.0 + b1 * np.asarray(r_d, dtype=float) / np.exp(1.0 + cost / (2.0 * b1))
    if cost == 2.0 * b1:
        c2 = np.full_like(c1, np.nan)
    else:
        c2 = np.full_like(c1, cost / 2.0 + b1 * cost / (cost - 2.0 * b1))

    interior = (c_under < c2) & (c2 < c_bar)  # nan compares False
    only_c1 = ~interior & (c_bar < c_under)
    rest = ~interior & ~only_c1
    prices = np.stack([c1, c2, c_bar, c_under], axis=-1)
    member = np.stack([np.ones_like(interior), interior, rest, rest], axis=-1)

    alpha = _alpha_star(prices, r_c[..., None], params)
    u_d = d2d_utility(alpha, prices, r_d[..., None], params)
    member &= (prices >= 0.0) & (u_d >= -ZERO_TOL)
    return prices, member, c1_is_root


def candidate_prices(budget: LinkBudget, params: GameParams) -> CandidatePrices:
    """The finite set of prices one of which is the leader's optimum."""
    if not feasible(budget, params):
        raise InfeasiblePairError(f"no feasible allocation for {budget}")
    prices, member, _ = _candidates(np.array([budget.r_c]), np.array([budget.r_d]), params)
    c1, c2, c_bar, c_under = (float(v) for v in prices[0])
    chosen = [float(p) for p, keep in zip(prices[0], member[0]) if keep]
    return CandidatePrices(c1, c2, c_bar, c_under, sorted(set(chosen)))


def solve_batch(r_c, r_d, params: GameParams, c_fixed: float | None = None) -> dict[str, np.ndarray]:
    """Equilibrium (or fixed-price) outcome for every budget in the arrays.

    Returns arrays keyed by the :class:`PairOutcome` field names; infeasible
    entries are all zero.
    """
    r_c = np.asarray(r_c, dtype=float)
    r_d = np.broadcast_to(np.asarray(r_d, dtype=float), r_c.shape)
    shape = r_c.shape
    ok_rc = r_c > 2.0 * params.r_th
    # dummy budget for entries where the formulas would divide by zero
    rc_safe = np.where(ok_rc, r_c, 4.0 * params.r_th)
    rd_safe = np.where(r_d > 0, r_d, 1.0)

    if c_fixed is None:
        ok = _feasible(r_c, r_d, params)
        prices, member, c1_is_root = _candidates(rc_safe, rd_safe, params)
        alpha_all = _alpha_star(prices, rc_safe[..., None], params)
        u_c_all = np.where(member, ceu_utility(alpha_all, prices, rc_safe[..., None], params), -np.inf)
        best = u_c_all.max(axis=-1, initial=-np.inf)
        # ties go to the cheapest price
        tied = member & (u_c_all >= best[..., None])
        c_star = np.where(tied, prices, np.inf).min(axis=-1)
        pick = np.argmax(tied & (prices == c_star[..., None]), axis=-1)
        ok &= member.any(axis=-1)
        # U_D vanishes identically at the root prices (c1 below threshold, c_bar)
        root = (pick == 2) | ((pick == 0) & c1_is_root)
        c_star = np.where(ok, c_star, 0.0)
    else:
        if c_fixed < 0:
            raise ValueError(f"price must be non-negative, got {c_fixed!r}")
        ok = ok_rc.copy()
        c_star = np.full(shape, float(c_fixed))
        root = np.zeros(shape, dtype=bool)

    alpha = np.where(ok, _alpha_star(c_star, rc_safe, params), 0.0)
    r_ceu = alpha * rc_safe
    r_d2d = (1.0 - 2.0 * alpha) * rd_safe
    u_ceu = ceu_utility(alpha, c_star, rc_safe, params)
    u_d2d = np.where(root, 0.0, d2d_utility(alpha, c_star, rd_safe, params))
    if c_fixed is not None:
        ok &= (u_d2d >= -ZERO_TOL) & (r_ceu >= params.r_th - ZERO_TOL)

    def masked(a):
        return np.where(ok, a, 0.0)

    return {
        "feasible": ok,
        "c_star": masked(c_star),
        "alpha_star": masked(alpha),
        "u_ceu": masked(u_ceu),
        "u_d2d": masked(u_d2d),
        "r_ceu": masked(r_ceu),
        "r_d2d": masked(r_d2d),
    }


def _outcome(arrays: dict[str, np.ndarray], idx=0) -> PairOutcome:
    if not arrays["feasible"].flat[idx]:
        return INFEASIBLE
    return PairOutcome(**{k: (bool(v.flat[idx]) if k == "feasible" else float(v.flat[idx]))
                          for k, v in arrays.items()})


def solve_equilibrium(budget: LinkBudget, params: GameParams) -> PairOutcome:
    """Stackelberg equilibrium of one CEU-D2D pairing by backward induction.

    The leader evaluates its payoff at each surviving candidate price and
    keeps the best one (cheapest on ties); an infeasible pair returns the
    all-zero outcome.
    """
    return _outcome(solve_batch(np.array([budget.r_c]), np.array([budget.r_d]), params))


def fixed_price_outcome(c_fixed: float, budget: LinkBudget, params: GameParams) -> PairOutcome:
    """Follower best response to a non-negotiable price ``c_fixed``."""
    return _outcome(solve_batch(np.array([budget.r_c]), np.array([budget.r_d]), params, c_fixed))


def default_fixed_price(params: GameParams) -> float:
    return params.relay_cost / 2.0 + params.beta1


# -- brute-force oracles -----------------------------------------------------

def oracle_follower(c: float, budget: LinkBudget, params: GameParams, step: float = 1e-5):
    """Grid search of the follower problem; returns ``(alpha, U_D)``.

    The grid starts at the smallest admissible allocation ``R_th/r_c``.
    """
    lo = params.r_th / budget.r_c
    if not lo < 0.5:
        raise InfeasiblePairError("r_c <= 2*R_th leaves no admissible allocation")
    grid = np.arange(lo, 0.5, step)
    u = d2d_utility(grid, c, budget.r_d, params)
    k = int(np.nanargmax(u))
    return float(grid[k]), float(u[k])


def oracle_price_limit(budget: LinkBudget, params: GameParams) -> float:
    """Upper end of the oracle price grid.

    Exceeds the threshold price by ``10*beta1``; any price above ``c_bar``
    leaves the follower with negative payoff, so the grid covers every
    candidate that can matter.
    """
    c_under = float(threshold_price(budget.r_c, params))
    c_bar = params.relay_cost / 2.0 + params.beta1 * budget.r_d / np.exp(1.0 + params.relay_cost / (2.0 * params.beta1))
    return max(c_under + 10.0 * params.beta1, c_bar + params.beta1)


def oracle_leader(budget: LinkBudget, params: GameParams, step: float = 1e-4,
                  c_max: float | None = None) -> tuple[float, float]:
    """1-D grid search over prices with the follower answering in closed form.

    Returns ``(c, U_C)`` of the best price with ``U_D >= 0``, or ``(nan, nan)``
    when no grid price is acceptable to the follower.
    """
    if budget.r_c <= 2 * params.r_th:
        return float("nan"), float("nan")
    if c_max is None:
        c_max = oracle_price_limit(budget, params)
    grid = np.arange(0.0, c_max + step / 2, step)
    alpha = _alpha_star(grid, budget.r_c, params)
    ok = d2d_utility(alpha, grid, budget.r_d, params) >= 0.0
    if not ok.any():
        return float("nan"), float("nan")
    u_c = np.where(ok, ceu_utility(alpha, grid, budget.r_c, params), -np.inf)
    k = int(np.argmax(u_c))
    return float(grid[k]), float(u_c[k])


def oracle_equilibrium(budget: LinkBudget, params: GameParams, grid_c: float = 1e-2,
                       grid_alpha: float = 1e-4, c_fixed: float | None = None,
                       chunk: int = 256) -> PairOutcome:
    """Exhaustive two-level grid search of the pricing game.

    For each price on ``[0, c_max]`` (step ``grid_c``) the follower's best
    allocation is searched on ``[R_th/r_c, 1/2)`` (step ``grid_alpha``); the
    leader then maximizes its payoff over prices acceptable to the follower.
    Passing ``c_fixed`` freezes the price and searches the follower only.
    """
    if grid_c <= 0 or grid_alpha <= 0:
        raise ValueError("grid steps must be positive")
    lo = params.r_th / budget.r_c if budget.r_c > 0 else np.inf
    if not lo < 0.5:
        return INFEASIBLE
    alphas = np.arange(lo, 0.5, grid_alpha)
    if c_fixed is not None:
        prices = np.array([float(c_fixed)])
    else:
        prices = np.arange(0.0, oracle_price_limit(budget, params) + grid_c / 2, grid_c)

    # U_D = [b1*ln((1-2a)r_d) - b2*P_D*a] - c*(1-2a); the bracket does not depend on c
    base = d2d_utility(alphas, 0.0, budget.r_d, params)
    slack = 1.0 - 2.0 * alphas
    best = (-np.inf, None, None, None)
    for start in range(0, prices.size, chunk):
        c = prices[start:start + chunk]
        u_d = base[None, :] - c[:, None] * slack[None, :]
        k = np.argmax(u_d, axis=1)
        a = alphas[k]
        ud = u_d[np.arange(k.size), k]
        uc = np.where(ud >= 0.0, ceu_utility(a, c, budget.r_c, params), -np.inf)
        i = int(np.argmax(uc))
        if uc[i] > best[0]:
            best = (float(uc[i]), float(c[i]), float(a[i]), float(ud[i]))
    u_c, c, a, u_d = best
    if not np.isfinite(u_c):
        return INFEASIBLE
    return PairOutcome(True, c, a, u_c, u_d, a * budget.r_c, (1 - 2 * a) * budget.r_d)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dcoop.rates import LinkBudget
from d2dcoop.stackelberg import (
    ZERO_TOL,
    GameParams,
    InfeasiblePairError,
    best_response_alpha,
    candidate_prices,
    ceu_utility,
    d2d_utility,
    default_fixed_price,
    feasible,
    fixed_price_outcome,
    oracle_equilibrium,
    oracle_follower,
    oracle_leader,
    solve_batch,
    solve_equilibrium,
    threshold_price,
)
from d2dcoop.verify import sample_instance


def budget(r_c, r_d):
    return LinkBudget(direct_rate=0.0, r1=r_c, r2=r_c, r_c=r_c, r_d=r_d)


# -- feasibility ---------------------------------------------------------------

def test_feasible_boundary(worked):
    _, game = worked
    assert not feasible(budget(2 * game.r_th, 50.0), game)


def test_feasible_worked(worked):
    b, game = worked
    # ln(5/3) = 0.5108 >= 10 * 0.1 * 2/6 = 0.3333
    assert feasible(b, game)


def test_feasible_inverted():
    # surplus ln(r_d/3) - 1/3 vanishes at r_d = 3*e^(1/3) = 4.1868
    game = GameParams(1.0, 10.0, 0.1, 0.1, 1e-15, 2.0)
    edge = 3 * math.exp(1 / 3)
    assert not feasible(budget(6.0, 4.0), game)
    assert not feasible(budget(6.0, edge - 1e-9), game)
    assert feasible(budget(6.0, edge + 1e-9), game)
    assert feasible(budget(6.0, 4.2), game)


# -- follower ------------------------------------------------------------------

def test_best_response_zero_price(worked):
    b, game = worked
    assert best_response_alpha(0.0, b, game) == pytest.approx(1 / 3, abs=1e-15)


def test_best_response_upper_branch(worked):
    b, game = worked
    # 1/2 - 1/(2*5 - 1) = 7/18
    assert best_response_alpha(5.0, b, game) == pytest.approx(0.3889, abs=5e-5)
    assert best_response_alpha(5.0, b, game) == pytest.approx(7 / 18, abs=1e-15)


def test_best_response_continuous_at_threshold(worked):
    b, game = worked
    c = float(threshold_price(b.r_c, game))
    assert c == pytest.approx(3.5)
    at = best_response_alpha(c, b, game)
    above = best_response_alpha(c + 1e-9, b, game)
    assert at == pytest.approx(game.r_th / b.r_c, abs=1e-15)
    assert above == pytest.approx(at, abs=1e-8)


def test_best_response_rejects_infeasible(worked):
    _, game = worked
    with pytest.raises(InfeasiblePairError):
        best_response_alpha(1.0, budget(3.0, 5.0), game)


def test_follower_optimality(rng):
    for _ in range(1000):
        b, game = sample_instance(rng)
        c = rng.uniform(0, 3 * float(threshold_price(b.r_c, game)))
        a_star = best_response_alpha(c, b, game)
        alphas = rng.uniform(game.r_th / b.r_c, 0.5, 1000)
        best = d2d_utility(a_star, c, b.r_d, game)
        assert np.all(best >= d2d_utility(alphas, c, b.r_d, game) - 1e-12)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0, 3))
def test_follower_matches_grid(seed, frac):
    b, game = sample_instance(np.random.default_rng(seed))
    c = frac * float(threshold_price(b.r_c, game))
    step = 1e-4
    a_grid, u_grid = oracle_follower(c, b, game, step)
    a_star = best_response_alpha(c, b, game)
    assert abs(a_grid - a_star) <= step
    assert float(d2d_utility(a_star, c, b.r_d, game)) >= u_grid - 1e-12


# -- candidate prices ------------------------------------------------------------

def test_candidate_prices_worked(worked):
    b, game = worked
    cp = candidate_prices(b, game)
    assert cp.c_under == pytest.approx(3.5)
    assert cp.c_bar == pytest.approx(0.5 + 5 / math.exp(1.5))
    assert cp.c_bar == pytest.approx(1.6157, abs=5e-5)
    assert cp.c1 == pytest.approx(3 * (math.log(5 / 3) - 1 / 3))
    assert cp.c1 == pytest.approx(0.5325, abs=5e-5)
    assert cp.candidate_set == [cp.c1]


def test_c2_singularity_excluded():
    game = GameParams(beta1=1.0, beta2=20.0, p_c=0.1, p_d=0.1, n0=1e-15, r_th=2.0)  # b2*P_D = 2*b1
    cp = candidate_prices(budget(6.0, 20.0), game)
    assert math.isnan(cp.c2)
    assert all(not math.isnan(c) for c in cp.candidate_set)
    # c_bar = 1 + 20/e^2 = 3.707 < c_under = 4, so only c1 remains
    assert cp.c_bar < cp.c_under and cp.candidate_set == [cp.c1]
    cp = candidate_prices(budget(6.0, 40.0), game)
    assert cp.c_bar >= cp.c_under
    assert set(cp.candidate_set) <= {cp.c1, cp.c_bar, cp.c_under}
    out = solve_equilibrium(budget(6.0, 40.0), game)
    c, u = oracle_leader(budget(6.0, 40.0), game, 1e-4)
    assert out.u_ceu == pytest.approx(u, abs=1e-3)


def test_surviving_candidates_acceptable_to_follower(rng):
    for _ in range(1000):
        b, game = sample_instance(rng)
        for c in candidate_prices(b, game).candidate_set:
            assert c >= 0
            alpha = best_response_alpha(c, b, game)
            assert d2d_utility(alpha, c, b.r_d, game) >= -ZERO_TOL


# -- equilibrium -----------------------------------------------------------------

def test_equilibrium_worked(worked):
    b, game = worked
    out = solve_equilibrium(b, game)
    assert out.feasible
    assert out.c_star == pytest.approx(0.5325, abs=1e-3)
    assert out.alpha_star == pytest.approx(1 / 3, abs=1e-9)
    assert out.u_d2d == pytest.approx(0.0, abs=1e-9)
    assert out.u_ceu == pytest.approx(math.log(2) + out.c_star / 3, abs=1e-12)
    assert out.u_ceu == pytest.approx(0.8707, abs=1e-4)
    assert out.r_ceu == pytest.approx(2.0)
    assert out.r_d2d == pytest.approx(5 / 3)


def test_equilibrium_infeasible_is_zero(worked):
    _, game = worked
    out = solve_equilibrium(budget(4.0, 50.0), game)
    assert not out.feasible
    assert (out.c_star, out.alpha_star, out.u_ceu, out.u_d2d, out.r_ceu, out.r_d2d) == (0, 0, 0, 0, 0, 0)


def test_interior_price_branch():
    # b2*P_D = 5 > 2*b1, c_under = 3.75 < c2 = 4.1667 < c_bar = 2.5 + 60/e^3.5
    game = GameParams(beta1=1.0, beta2=10.0, p_c=0.1, p_d=0.5, n0=1e-15, r_th=1.0)
    b = budget(10.0, 60.0)
    cp = candidate_prices(b, game)
    assert cp.c_under < cp.c2 < cp.c_bar
    out = solve_equilibrium(b, game)
    assert out.c_star == pytest.approx(2.5 + 5 / 3)
    assert out.alpha_star == pytest.approx(0.2)
    assert out.u_d2d > 0
    c, u = oracle_leader(b, game, 1e-4)
    assert abs(c - out.c_star) <= 2e-4
    assert out.u_ceu == pytest.approx(u, abs=1e-6)


def test_zero_follower_payoff_below_cost_threshold(rng):
    seen = 0
    for _ in range(2000):
        b, game = sample_instance(rng)
        if game.relay_cost >= 2 * game.beta1:
            continue
        seen += 1
        out = solve_equilibrium(b, game)
        # recompute from the payoff definition rather than trusting the stored field
        assert abs(float(d2d_utility(out.alpha_star, out.c_star, b.r_d, game))) <= ZERO_TOL
        assert out.u_d2d == 0.0
    assert seen > 500


def test_outcome_invariants(rng):
    for _ in range(1000):
        b, game = sample_instance(rng)
        out = solve_equilibrium(b, game)
        assert out.feasible
        assert 0 < out.alpha_star < 0.5
        assert out.r_ceu >= game.r_th - 1e-9
        assert out.u_d2d >= -1e-9
        if game.r_th >= 1:  # ln(R_C) may be negative otherwise
            assert out.u_ceu > 0
        assert out.r_ceu == pytest.approx(out.alpha_star * b.r_c)
        assert out.r_d2d == pytest.approx((1 - 2 * out.alpha_star) * b.r_d)
        assert out.u_ceu == pytest.approx(float(ceu_utility(out.alpha_star, out.c_star, b.r_c, game)))


def test_batch_matches_scalar(rng):
    game = GameParams()
    r_c = rng.uniform(0, 12, (20, 30))
    r_d = rng.uniform(0.1, 25, (20, 30))
    arrays = solve_batch(r_c, r_d, game)
    for i in range(20):
        for j in range(30):
            out = solve_equilibrium(budget(r_c[i, j], r_d[i, j]), game)
            assert bool(arrays["feasible"][i, j]) == out.feasible
            for k in ("c_star", "alpha_star", "u_ceu", "u_d2d", "r_ceu", "r_d2d"):
                assert arrays[k][i, j] == getattr(out, k)


# -- oracle ----------------------------------------------------------------------

def test_oracle_infeasible_matches(worked):
    _, game = worked
    assert oracle_equilibrium(budget(4.0, 50.0), game) == solve_equilibrium(budget(4.0, 50.0), game)
    # r_c > 2 R_th but the follower can never break even
    b = budget(6.0, 4.0)
    assert oracle_equilibrium(b, game) == solve_equilibrium(b, game)


def test_oracle_fixed_price_submode(rng):
    step = 1e-4
    for _ in range(200):
        b, game = sample_instance(rng)
        c = rng.uniform(0, 2 * float(threshold_price(b.r_c, game)))
        a = best_response_alpha(c, b, game)
        if d2d_utility(a, c, b.r_d, game) < 0:
            assert not oracle_equilibrium(b, game, grid_alpha=step, c_fixed=c).feasible
            continue
        out = oracle_equilibrium(b, game, grid_alpha=step, c_fixed=c)
        assert out.c_star == c
        assert abs(out.alpha_star - a) <= step


def _alpha_resolution(out, b, game, grid_c, grid_alpha):
    """Smallest alpha difference the two-level grid can resolve near the optimum."""
    if out.c_star <= threshold_price(b.r_c, game):
        return grid_alpha
    slope = 2 * game.beta1 / (2 * out.c_star - game.relay_cost) ** 2  # d alpha* / dc
    return max(grid_alpha, slope * grid_c)


@pytest.mark.slow
def test_closed_form_vs_two_level_oracle(rng):
    grid_c, grid_alpha = 2e-2, 2e-4
    for _ in range(1000):
        b, game = sample_instance(rng)
        out = solve_equilibrium(b, game)
        ref = oracle_equilibrium(b, game, grid_c, grid_alpha)
        assert ref.feasible
        assert abs(out.u_ceu - ref.u_ceu) <= 10 * grid_c
        assert ref.u_ceu <= out.u_ceu + 10 * grid_c
        assert abs(out.alpha_star - ref.alpha_star) <= 10 * _alpha_resolution(out, b, game, grid_c, grid_alpha)


# -- fixed price -------------------------------------------------------------------

def test_fixed_price_zero(worked):
    b, game = worked
    out = fixed_price_outcome(0.0, b, game)
    assert out.alpha_star == pytest.approx(1 / 3)
    assert out.u_d2d == pytest.approx(math.log(5 / 3) - 1 / 3, abs=1e-12)


def test_fixed_price_huge_is_infeasible(worked):
    b, game = worked
    assert fixed_price_outcome(1e6, b, game) == solve_equilibrium(budget(1.0, 1.0), game)
    assert not fixed_price_outcome(1e6, b, game).feasible


def test_fixed_price_worked(worked):
    b, game = worked
    out = fixed_price_outcome(0.3, b, game)
    assert out.alpha_star == pytest.approx(1 / 3)
    assert out.u_d2d == pytest.approx(0.0775, abs=5e-5)
    assert out.u_ceu == pytest.approx(math.log(2) + 0.1, abs=1e-12)
    assert out.u_ceu == pytest.approx(0.7931, abs=5e-5)


def test_default_fixed_price_value():
    assert default_fixed_price(GameParams()) == pytest.approx(1.5)

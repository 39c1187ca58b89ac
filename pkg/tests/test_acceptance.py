"""Exit criteria. Each test prints one PASS/FAIL line (also repeated in the
terminal summary) with the measured quantity next to its tolerance."""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from d2dcoop.cli import main, results_csv
from d2dcoop.matching import ceu_weakly_prefers, deferred_acceptance, enumerate_stable_matchings, find_blocking_pairs
from d2dcoop.rates import LinkBudget
from d2dcoop.simulation import SCHEMES, ScenarioConfig, prepare_drop, run_sweep
from d2dcoop.stackelberg import GameParams, d2d_utility, solve_equilibrium
from d2dcoop.verify import follower_gap, leader_gap, random_preferences, sample_instance

DEFAULT = ScenarioConfig()
N_VALUES = DEFAULT.n_values


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def within(a, b, sa, sb, k=2.0):
    """a <= b up to k standard errors of the difference."""
    return a <= b + k * math.hypot(sa, sb)


@pytest.fixture(scope="module")
def sweep():
    start = time.perf_counter()
    result = run_sweep(DEFAULT, SCHEMES)
    return result, time.perf_counter() - start


def test_1_follower_closed_form():
    rng = np.random.default_rng(101)
    step = 1e-5
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        budget, game = sample_instance(rng, GameParams())
        c = rng.uniform(0.0, 3.0 * (game.relay_cost / 2 + game.beta1 * budget.r_c / (budget.r_c - 2 * game.r_th)))
        worst = max(worst, abs(follower_gap(c, budget, game, step)))
    elapsed = time.perf_counter() - start
    report(1, worst <= 10 * step and elapsed < 10,
           f"max |U_D grid - U_D closed| = {worst:.2e} <= {10 * step:.0e}, {elapsed:.1f}s < 10s")


def test_2_leader_closed_form():
    rng = np.random.default_rng(202)
    step = 1e-4
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        budget, game = sample_instance(rng, GameParams())
        worst = max(worst, abs(leader_gap(budget, game, step)))
    elapsed = time.perf_counter() - start
    report(2, worst <= 10 * step and elapsed < 60,
           f"max |U_C grid - U_C closed| = {worst:.2e} <= {10 * step:.0e}, {elapsed:.1f}s < 60s")


def test_3_zero_follower_payoff():
    rng = np.random.default_rng(303)
    worst, count = 0.0, 0
    # abstract instances, half of them at the default constants
    for _ in range(3000):
        budget, game = sample_instance(rng, GameParams())
        if not game.relay_cost < 2 * game.beta1:
            continue
        out = solve_equilibrium(budget, game)
        worst = max(worst, abs(float(d2d_utility(out.alpha_star, out.c_star, budget.r_d, game))))
        count += 1
    # every feasible pair of real drops under the defaults (b2*P_D = 1 < 2 = 2*b1)
    game = DEFAULT.game
    for d in range(100):
        state = prepare_drop(DEFAULT, 20, d, ("proposed",))
        out = state.outcomes["stackelberg"]
        idx = np.nonzero(out["feasible"])
        u = d2d_utility(out["alpha_star"][idx], out["c_star"][idx], state.budgets["r_d"][idx], game)
        if u.size:
            worst = max(worst, float(np.max(np.abs(u))))
        count += u.size
    report(3, worst <= 1e-9 and count > 0, f"max |U_D(c*, a*)| = {worst:.2e} <= 1e-9 over {count} feasible instances")


def test_4_worked_instance():
    game = GameParams(beta1=1.0, beta2=10.0, p_c=0.1, p_d=0.1, n0=1e-15, r_th=2.0)
    out = solve_equilibrium(LinkBudget(0.0, 6.0, 6.0, 6.0, 5.0), game)
    ok = (abs(out.c_star - 0.5325) <= 1e-3 and abs(out.alpha_star - 1 / 3) <= 1e-9
          and abs(out.u_d2d) <= 1e-9)
    report(4, ok, f"c* = {out.c_star:.6f}, a* = {out.alpha_star:.12f}, U_D = {out.u_d2d:.1e}")


def test_5_matching_stability():
    blocked = 0
    for d in range(500):
        n = N_VALUES[d % len(N_VALUES)]
        state = prepare_drop(DEFAULT, n, d, ("proposed",))
        ceu, d2d = state.preferences["stackelberg"]
        blocked += bool(find_blocking_pairs(state.matchings["proposed"], ceu, d2d))
    not_optimal = 0
    rng = np.random.default_rng(505)
    instances = []
    for d in range(250):
        m, n = 1 + d % 6, 1 + (d // 6) % 6
        state = prepare_drop(ScenarioConfig(m=m), n, d, ("proposed",))
        instances.append(state.preferences["stackelberg"])
    instances += [random_preferences(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7))) for _ in range(250)]
    for ceu, d2d in instances:
        mu = deferred_acceptance(ceu, d2d)
        stable = enumerate_stable_matchings(ceu, d2d)
        optimal = [s for s in stable if all(ceu_weakly_prefers(s, o, ceu) for o in stable)]
        not_optimal += not (len(optimal) == 1 and optimal[0] == mu)
    report(5, blocked == 0 and not_optimal == 0,
           f"{blocked}/500 drops with blocking pairs, {not_optimal}/{len(instances)} small instances "
           "where DA differs from the CEU-optimal stable matching")


def test_6_d2d_utility_zero_and_ceu_utility_rising(sweep):
    result, _ = sweep
    nonzero = sum(int(np.count_nonzero(result.values("proposed", n, "d2d_total_utility"))) for n in N_VALUES)
    means = [result.stat("proposed", n, "ceu_total_utility") for n in N_VALUES]
    positive = all(s.mean > 0 for s in means)
    rising = all(within(a.mean, b.mean, a.stderr, b.stderr) for a, b in zip(means, means[1:]))
    report(6, nonzero == 0 and positive and rising,
           f"{nonzero} drops with nonzero D2D utility; CEU utility means "
           + " ".join(f"{s.mean:.2f}" for s in means))


def test_7_outage_ordering(sweep):
    result, _ = sweep
    st = {s: [result.stat(s, n, "outage_fraction") for n in N_VALUES] for s in SCHEMES}
    ordered = all(
        within(p.mean, f.mean, p.stderr, f.stderr) and within(f.mean, r.mean, f.stderr, r.stderr)
        for p, f, r in zip(st["proposed"], st["stable_fixed_price"], st["random_stackelberg"]))
    flat_cells = [s for n, s in zip(N_VALUES, st["random_stackelberg"]) if n >= DEFAULT.m]
    flat = all(abs(a.mean - b.mean) <= 2 * math.hypot(a.stderr, b.stderr)
               for k, a in enumerate(flat_cells) for b in flat_cells[k + 1:])
    report(7, ordered and flat,
           "outage proposed/fixed/random at N=" + ",".join(map(str, N_VALUES)) + ": "
           + "; ".join(f"{p.mean:.3f}/{f.mean:.3f}/{r.mean:.3f}" for p, f, r in
                       zip(st["proposed"], st["stable_fixed_price"], st["random_stackelberg"]))
           + f"; random flat for N>={DEFAULT.m}: {flat}")


def test_8_sum_rate_ordering(sweep):
    result, _ = sweep
    st = {s: [result.stat(s, n, "ceu_sum_rate") for n in N_VALUES] for s in SCHEMES}
    ordered = all(
        within(f.mean, p.mean, f.stderr, p.stderr) and within(r.mean, f.mean, r.stderr, f.stderr)
        for p, f, r in zip(st["proposed"], st["stable_fixed_price"], st["random_stackelberg"]))
    report(8, ordered, "CEU sum-rate proposed/fixed/random: "
           + "; ".join(f"{p.mean:.2f}/{f.mean:.2f}/{r.mean:.2f}" for p, f, r in
                       zip(st["proposed"], st["stable_fixed_price"], st["random_stackelberg"])))


def test_9_reproducibility(sweep, tmp_path):
    result, in_process = sweep
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    start = time.perf_counter()
    assert main(["sweep", "--out-dir", str(serial)]) == 0
    elapsed = time.perf_counter() - start
    assert main(["sweep", "--manifest", str(serial / "manifest.json"), "--workers", "2",
                 "--out-dir", str(parallel)]) == 0
    a = (serial / "results.csv").read_bytes()
    b = (parallel / "results.csv").read_bytes()
    same = a == b and a.decode() == results_csv(result)
    rows = a.decode().count("\n") - 1
    report(9, same and rows == 3 * 8 * 6 and elapsed < 300,
           f"serial vs parallel results.csv identical: {same} ({rows} rows); "
           f"full default sweep {elapsed:.1f}s (in-process {in_process:.1f}s) < 300s")

import numpy as np
import pytest

from d2dcoop.rates import LinkBudget
from d2dcoop.stackelberg import GameParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked():
    """Hand-checkable instance: r_c=6, R_th=2, r_d=5, b1=1, b2=10, P_D=0.1."""
    game = GameParams(beta1=1.0, beta2=10.0, p_c=0.1, p_d=0.1, n0=1e-15, r_th=2.0)
    budget = LinkBudget(direct_rate=0.0, r1=6.0, r2=6.0, r_c=6.0, r_d=5.0)
    return budget, game


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import settings

from ppcm.problems import generate_lsq, oracle_solve, toy_problem
from ppcm.vi_solver import PrimalDualPoint

settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def toy():
    return toy_problem()


@pytest.fixture
def toy_solution():
    # KKT by hand: x* = 2 on both agents, A^T lam* = g(x*) = (1, -1) -> lam_1 - lam_2 = 4
    return PrimalDualPoint(np.array([[2.0], [2.0]]), np.array([[2.0], [-2.0]]))


@pytest.fixture
def small_lsq():
    inst, cp = generate_lsq(40, 10, 4, seed=0)
    return inst, cp, oracle_solve(inst)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Shared, session-cached numerical fixtures.

Degeneracy scans and branch continuations are the expensive parts of the
suite, so each is computed once and reused by the unit and acceptance
tests.
"""

from __future__ import annotations

import numpy as np
import pytest

from annbif.config import ProblemConfig
from annbif.continuation import BranchTracer
from annbif.pde2d import Operator2D
from annbif.spectral import find_all_degeneracies

# frozen reference values for the default annulus (N=3, a=1, b=2, λ=0)
P1_N3 = 1.09419893426064
P2_N3 = 1.2824596091330611
P3_N3 = 1.5643519930599543
P1_N2 = 1.0476667756163052
P2_N2 = 1.1903002608889397

N2_THETA = 120  # divisible by every n <= 6
BRANCH_STEPS = 20

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture(scope="session")
def cfg():
    return ProblemConfig()


@pytest.fixture(scope="session")
def cfg2():
    return ProblemConfig(N=2, n_theta=N2_THETA)


@pytest.fixture(scope="session")
def op3(cfg):
    return Operator2D(cfg)


@pytest.fixture(scope="session")
def op2(cfg2):
    return Operator2D(cfg2)


@pytest.fixture(scope="session")
def degeneracies(cfg):
    """k = 1, 2, 3 degeneracies on (1.05, 3) from one shared 400-point scan."""
    return find_all_degeneracies(cfg, [1, 2, 3], (1.05, 3.0))


@pytest.fixture(scope="session")
def degeneracies_n2(cfg2):
    return find_all_degeneracies(cfg2, [1, 2], (1.01, 1.5), n_scan=120)


@pytest.fixture(scope="session")
def dp1(degeneracies):
    return degeneracies[1][0]


@pytest.fixture(scope="session")
def dp2(degeneracies):
    return degeneracies[2][0]


@pytest.fixture(scope="session")
def tracer1(cfg, dp1, op3):
    return BranchTracer(cfg, dp1, op3)


@pytest.fixture(scope="session")
def tracer2(cfg, dp2, op3):
    return BranchTracer(cfg, dp2, op3)


@pytest.fixture(scope="session")
def branches1(tracer1):
    return {d: tracer1.continue_branch(d, BRANCH_STEPS) for d in (1, -1)}


@pytest.fixture(scope="session")
def branch2(tracer2):
    return tracer2.continue_branch(1, BRANCH_STEPS)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(42)


N2_COMMON_P = 1.2  # above both N = 2 bifurcation points


@pytest.fixture(scope="session")
def n2_solutions(cfg2, degeneracies_n2, op2):
    """For n = 1, 2: (tracer, branch, point at the common exponent)."""
    from annbif.continuation import StepControls

    out = {}
    for n in (1, 2):
        dp = degeneracies_n2[n][0]
        tr = BranchTracer(cfg2, dp, op2, StepControls(p_target=N2_COMMON_P, max_step=0.2))
        b = tr.continue_branch(1, 300)
        out[n] = (tr, b, tr.point_at(b, N2_COMMON_P) if b.termination == "target_reached" else None)
    return out

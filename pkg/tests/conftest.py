"""Shared fixtures: the canonical two-gain instance and a tiny one-gain one.

Solves are session-scoped because several suites compare against the same
optimal policy; everything else is cheap enough to rebuild per test.
"""

from __future__ import annotations

import numpy as np
import pytest

from remotepower import (
    ActionSet,
    ControlProblem,
    CostWeights,
    FadingChannel,
    GridGeometry,
    ReceptionModel,
    ScalarProcess,
    build_geometry,
    build_problem,
    load_config,
    solve,
)

TINY_CONFIG = {
    "channel": {"gains": [1.0], "transition": [[1.0]]},
    "actions": {"levels": [0.0, 4.0], "saturation_radius": 6.0},
    "grid": {"half_width": 20.0, "n_points": 401, "convolution": "direct"},
    "solver": {"depth": 3},
    "simulate": {"horizon": 20_000, "replications": 3, "base_seed": 7},
}

# filled by test_acceptance's _report, echoed after the run so the terminal
# log always carries one line per criterion (pytest captures even the real
# stdout at the fd level, so printing from inside a passing test is lost)
ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def canon_cfg() -> dict:
    return load_config(None)


@pytest.fixture(scope="session")
def canon_problem(canon_cfg) -> ControlProblem:
    return build_problem(canon_cfg)


@pytest.fixture(scope="session")
def canon_geometry(canon_cfg, canon_problem) -> GridGeometry:
    return build_geometry(canon_cfg, canon_problem)


@pytest.fixture(scope="session")
def canon_solution(canon_problem, canon_geometry):
    return solve(canon_problem, canon_geometry, depth=8)


@pytest.fixture(scope="session")
def canon_solution_deeper(canon_problem, canon_geometry):
    """Depth-10 counterpart of canon_solution for truncation comparisons."""
    return solve(canon_problem, canon_geometry, depth=10)


def make_tiny_problem(alpha: float = 0.5) -> ControlProblem:
    return ControlProblem(
        process=ScalarProcess(a=1.2, noise_var=1.0),
        channel=FadingChannel(gains=(1.0,), transition=((1.0,),)),
        reception=ReceptionModel(form="exponential", scale=1.0),
        actions=ActionSet(levels=(0.0, 4.0), saturation_radius=6.0),
        cost=CostWeights(alpha=alpha),
    )


@pytest.fixture(scope="session")
def tiny_problem() -> ControlProblem:
    return make_tiny_problem()


@pytest.fixture(scope="session")
def tiny_geometry() -> GridGeometry:
    return GridGeometry(half_width=20.0, n_points=401, convolution="direct")


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20250818)

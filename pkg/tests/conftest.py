"""Shared fixtures: scenario builders are session-scoped because the first
kernel call pays the JIT compile, and the scenarios themselves are immutable.

The acceptance module registers one summary line per criterion in
ACCEPTANCE_LINES; the terminal-summary hook below reprints them at the end of
the run so the pass/fail record is visible without -s.
"""

import numpy as np
import pytest

from softbarrier import (
    HorizonGrid,
    build_pendulum_scenario,
    build_unicycle_scenario,
    default_config,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pend_wide():
    return build_pendulum_scenario("wide")


@pytest.fixture(scope="session")
def pend_narrow():
    return build_pendulum_scenario("narrow")


@pytest.fixture(scope="session")
def pend_multi():
    return build_pendulum_scenario("multi")


@pytest.fixture(scope="session")
def unicycle():
    return build_unicycle_scenario()


@pytest.fixture(scope="session")
def wide_cfg(pend_wide):
    return default_config(pend_wide)


@pytest.fixture(scope="session")
def multi_cfg(pend_multi):
    return default_config(pend_multi)


@pytest.fixture(scope="session")
def short_grid():
    return HorizonGrid(n_samples=10, ts=0.1, substeps=5)


@pytest.fixture(scope="session")
def canonical_runs(pend_wide, wide_cfg):
    """(trace, metrics) of the canonical single-backup run from [0.5, 0],
    keyed by the control hold length. Shared because several tests audit the
    same run."""
    from softbarrier import SimConfig, metrics, simulate

    out = {}
    for delta_t in (0.1, 0.05):
        trace = simulate(
            pend_wide,
            SimConfig(x0=[0.5, 0.0], duration=20.0, delta_t=delta_t, law="single"),
            wide_cfg,
        )
        out[delta_t] = (trace, metrics(trace, pend_wide))
    return out


@pytest.fixture(scope="session")
def canonical_metrics(canonical_runs):
    return {dt: m for dt, (_, m) in canonical_runs.items()}


def sample_box(scenario, n, seed):
    """Uniform states in the scenario's declared sampling box."""
    rng = np.random.default_rng(seed)
    lo, hi = scenario.sample_box[:, 0], scenario.sample_box[:, 1]
    return lo + (hi - lo) * rng.random((n, scenario.model.n))

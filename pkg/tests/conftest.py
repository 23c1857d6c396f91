"""Shared fixtures.

The full closed-loop runs are expensive, so each bundled case study is
simulated once per session and shared between the harness and acceptance
tests.
"""

from __future__ import annotations

import time

import pytest

from coldmpc import config as cfgmod
from coldmpc import harness, mpc
from coldmpc import refrigerant as rf

ACCEPTANCE_LINES: list[str] = []


def load_clean(name, **overrides):
    """Load a bundled config ignoring the caller's environment."""
    env = {f"COLDMPC_{k.replace('.', '__').upper()}": str(v) for k, v in overrides.items()}
    return cfgmod.load(name, environ=env)


@pytest.fixture(scope="session")
def fit():
    return rf.default_fit()


@pytest.fixture(scope="session")
def default_config():
    return cfgmod.ScenarioConfig()


@pytest.fixture(scope="session")
def surrogate(fit, default_config):
    c = default_config
    return mpc.cached_surrogate(fit, c.compressor, c.cabin, c.cycle, c.surrogate)


@pytest.fixture(scope="session")
def model(fit, default_config):
    return harness.prediction_model(default_config, fit)


def _timed_run(cfg):
    started = time.perf_counter()
    trace, summary = harness.run(cfg)
    return cfg, trace, summary, time.perf_counter() - started


@pytest.fixture(scope="session")
def case1():
    """(config, trace, summary, wall seconds) for the bundled first case study."""
    return _timed_run(load_clean("case_study_1"))


@pytest.fixture(scope="session")
def case2():
    return _timed_run(load_clean("case_study_2"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

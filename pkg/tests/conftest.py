"""Shared fixtures: the default benchmark environment and one trained model.

Training takes a few seconds, so the trained selector is session-scoped and
shared by every test that needs a realistic model.
"""

from __future__ import annotations

import time

import pytest

from metaorch import evalreport, neuralnet, training
from metaorch.envsim import EnvConfig, Environment
from metaorch.orchestrator import input_width
from metaorch.runconfig import RunConfig

# Verdict lines appended by the acceptance tests, echoed after the run.
ACCEPTANCE_LINES: list[str] = []

# Wall-clock durations of shared expensive fixtures, keyed by name.
TIMINGS: dict[str, float] = {}


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def benchmark_env(run_config) -> Environment:
    return Environment(run_config.env_config())


@pytest.fixture(scope="session")
def small_env() -> Environment:
    """A second environment with a different seed, for cross-checks."""
    return Environment(EnvConfig(master_seed=7))


@pytest.fixture(scope="session")
def trained(run_config, benchmark_env):
    """(params, records) of the default training run on the benchmark env."""
    started = time.perf_counter()
    params = neuralnet.init_parameters(
        run_config.network_config(), seed=run_config.init_seed
    )
    params, records = training.train(
        benchmark_env, params, run_config.train_config(), run_config.fuzzy_weights()
    )
    TIMINGS["train"] = time.perf_counter() - started
    return params, records


@pytest.fixture(scope="session")
def trained_params(trained):
    return trained[0]


@pytest.fixture(scope="session")
def warmup(run_config, benchmark_env):
    return evalreport.warmup_histories(
        benchmark_env, run_config.warmup_tasks, seed=run_config.warmup_seed
    )


@pytest.fixture(scope="session")
def tiny_net_config() -> neuralnet.NetworkConfig:
    return neuralnet.NetworkConfig(input_dim=6, hidden_dims=(5,), n_agents=4)


@pytest.fixture()
def default_input_dim(run_config) -> int:
    cfg = run_config
    return input_width(cfg.d, cfg.c, cfg.n_agents)

import numpy as np
import pytest

from secure_game.matrix_game import BACKENDS
from secure_game.scenario import build_scenario, builtin_scenario_path, load_scenario

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def reactor_config():
    return load_scenario(builtin_scenario_path("batch_reactor"))


@pytest.fixture(scope="session")
def reduced_config():
    return load_scenario(builtin_scenario_path("batch_reactor_k6"))


@pytest.fixture(scope="session")
def reduced_scenario(reduced_config):
    return build_scenario(reduced_config)


@pytest.fixture(scope="session")
def quick_scenario(reduced_config):
    """Reduced scenario with a cheap kernel estimate, for structural tests."""
    cfg = reduced_config.with_overrides(mc={"kernel_trials": 2000, "rollouts": 500, "burn_in": 40})
    return build_scenario(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

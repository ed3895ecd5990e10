import numpy as np
import pytest

from pinnspectral import Box, Interval, LShape, build_rule, init_network
from pinnspectral.trainer import TrainConfig, train_adam
from pinnspectral.problems import poisson_1d

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rule_1d():
    return build_rule(Interval(), 200)


@pytest.fixture(scope="session")
def fine_1d():
    return build_rule(Interval(), 400)


@pytest.fixture(scope="session")
def rule_box():
    return build_rule(Box(), 30)


@pytest.fixture(scope="session")
def rule_lshape():
    return build_rule(LShape(), 20)


@pytest.fixture(scope="session")
def small_trained_net():
    """A briefly trained 1D network: enough structure for solver tests."""
    cfg = TrainConfig(epochs=1500, n_collocation=500, seed=3)
    net, _ = train_adam(init_network([1, 20, 20, 1], 3), poisson_1d(), cfg, log_every=0)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import warnings

import numpy as np
import pytest

from rscmd.scenario import Scenario, SystemConfig

warnings.filterwarnings("ignore", category=UserWarning, module="cvxpy")


def random_scenario(rng: np.random.Generator, n_tx: int, n_users: int, scale: float = 1e-5, **cfg) -> Scenario:
    """Scenario with i.i.d. complex Gaussian channels of power ``scale**2`` and default noise."""
    config = SystemConfig(n_tx=n_tx, n_users=n_users, **cfg)
    h = scale * (rng.standard_normal((n_tx, n_users)) + 1j * rng.standard_normal((n_tx, n_users))) / np.sqrt(2)
    return Scenario.from_channel(h, config.noise_w, config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip(":abcd")), s)):
            terminalreporter.write_line(line)

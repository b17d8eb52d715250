import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cellassign.radio import RadioConfig, sinr_matrix  # noqa: E402
from cellassign.scenario import Area, equal_capacities, generate_uniform, random_stations  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def random_instance(n: int, m: int, seed: int, area: Area = Area(700.0, 700.0), scale: str = "db"):
    """SINR matrix and capacities for a uniform scenario (remainders spread over the first stations)."""
    stations = random_stations(m, area, seed)
    scenario = generate_uniform(n, stations, area, seed + 1, allow_remainder=True)
    S = sinr_matrix(scenario, RadioConfig(sinr_scale=scale)).values
    return S, list(equal_capacities(n, m, allow_remainder=True))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

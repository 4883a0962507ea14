import numpy as np
import pytest

from edgehedge.config import build_scenario
from edgehedge.domain import EdgeServerState, ServiceProfile, UserProfile

from helpers import make_config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def server():
    return EdgeServerState(uplink_bw=80.0, downlink_bw=100.0, mem_util=0.4,
                           cpu_util=0.3, active_users=1, median_prop=0.005)


@pytest.fixture
def user():
    return UserProfile(uplink_bw=30.0, downlink_bw=60.0)


@pytest.fixture
def service():
    return ServiceProfile(input_size=6.0, est_output_size=1.2,
                          comp_stats=[(0.40, 0.0), (0.42, 0.0), (0.45, 0.0), (0.70, 0.0), (1.10, 0.0)],
                          nu=3, features=(0.9, 0.5), name="svc")




@pytest.fixture
def small_scenario():
    cfg = make_config(sim={"episodes": 1, "steps_per_episode": 64, "eval_episodes": 1},
                      traces={"path": None, "generator": {"samples_per_cell": 100}})
    return build_scenario(cfg)


# -- acceptance summary ----------------------------------------------------------
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])

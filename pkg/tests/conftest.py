import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cyclesim.model import Params

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return Params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# small but complete invocations of every subcommand
SMALL_CLI_RUNS = {
    "simulate": ["--years", "3", "--burn-in-days", "200"],
    "equilibria": [],
    "portrait": ["--planes", "-1.0", "--fan-density", "3", "--basin-grid", "12"],
    "cycles": ["--years", "80", "--replicas", "2", "--burn-in-days", "500"],
    "sweep": ["--years", "60", "--epsilon-grid", "0.02,0.03", "--burn-in-days", "500"],
    "calibrate": ["--synthetic-trials", "2"],
    "efficient": ["--days", "2000"],
    "micro-check": ["--n-agents", "1000", "--days", "40", "--sizes", "200,1000",
                    "--scaling-replicas", "1"],
}

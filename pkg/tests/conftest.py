import numpy as np
import pytest

from greencr.model import (Allocation, PrimaryUser, Scenario, SecondaryUser, SensingModel,
                           SystemParams, TrafficClass)

PARAMS = SystemParams()


def gains_for(H, params=PARAMS, pu_interference=0.0):
    """Raw power gains giving effective gain(s) ``H``."""
    return np.atleast_1d(np.asarray(H, dtype=float)) * params.snr_gap * (
        params.noise_power + pu_interference)


def make_user(H=10.0, chi=5.0, eps=1e-3, tau=10e-6, req=0.0, rt=False, uid=0,
              params=PARAMS, cross=None, num_pus=0):
    g = gains_for(H, params)
    if cross is None:
        cross = np.zeros((g.size, num_pus))
    return SecondaryUser(uid, TrafficClass.RT if rt else TrafficClass.NRT, chi, eps, tau, req,
                         g, cross)


def make_scenario(users, pus=(), n=None, prior=0.3, miss=0.05, fa=0.1, params=None):
    n = n or users[0].gains.size
    params = params or SystemParams(num_subchannels=n)
    sensing = SensingModel(np.full(n, prior), np.full(n, miss), np.full(n, fa), tuple(range(n)))
    return Scenario(params, tuple(users), tuple(pus), sensing)


@pytest.fixture
def params():
    return PARAMS


@pytest.fixture
def user():
    return make_user()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one PASS/FAIL line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import warnings

import numpy as np
import pytest

from aempc.analysis import GridResolutionWarning, compute_constants
from aempc.config import build_experiment
from aempc.presets import A1_CAP, A2_CAP
from aempc.sim import run_closed_loop

from .scenarios import decaying


def building_state_matrix(theta):
    """2R2C state matrix written out entry by entry (independent of the affine decomposition)."""
    t1, t2 = theta
    return np.array([
        [1.0 - t1 / A1_CAP, t1 / A1_CAP],
        [t1 / A2_CAP, 1.0 - (t1 + t2) / A2_CAP],
    ])


@pytest.fixture(scope="session")
def building():
    """Expanded building preset: scenario with model, box, constraints, cost and terminal cost."""
    return build_experiment({"preset": "building"})


@pytest.fixture(scope="session")
def bscn(building):
    return building.scenario


@pytest.fixture(scope="session")
def decaying_log(bscn):
    """5000-step building run with geometrically decaying disturbances (shared by several modules)."""
    return run_closed_loop(decaying(bscn))


@pytest.fixture(scope="session")
def building_constants(bscn):
    with warnings.catch_warnings():
        warnings.simplefilter("error", GridResolutionWarning)
        return compute_constants(bscn.model, bscn.theta_box, bscn.mpc_config, bscn.mu, w_bar=bscn.w_bar)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)

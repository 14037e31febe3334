import os

import pytest
from hypothesis import HealthCheck, settings

from cloudturing import sim
from cloudturing.spectral import GridSpec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Collects one PASS/FAIL line per acceptance criterion for the end-of-run summary."""
    if ACCEPTANCE_KEY not in pytestconfig.stash:
        pytestconfig.stash[ACCEPTANCE_KEY] = []
    return pytestconfig.stash[ACCEPTANCE_KEY]


@pytest.fixture(scope="session")
def run_1d():
    """Rain-free 1D reference run to t = 2000."""
    return sim.run(sim.preset_1d())


@pytest.fixture(scope="session")
def run_1d_half_step():
    return sim.run(sim.preset_1d(h=0.01))


@pytest.fixture(scope="session")
def run_2d():
    """2D reference run to t = 120 on the default 128 x 128 grid."""
    return sim.run(sim.preset_2d())


@pytest.fixture(scope="session")
def run_2d_long():
    """2D run carried past saturation, on a coarser grid to keep it affordable."""
    cfg = sim.preset_2d(grid=GridSpec(2, 64, 50.0), t_end=400.0, snapshot_times=(120.0, 400.0), diag_interval=2.0)
    return sim.run(cfg)


SWEEP_B = (0.02, 0.06, 0.10, 0.12, 0.13, 0.14, 0.15, 0.16, 0.165)


@pytest.fixture(scope="session")
def sweep_1d():
    return sim.sweep_B(sim.preset_1d(snapshot_times=(2000.0,), diag_interval=50.0), SWEEP_B)

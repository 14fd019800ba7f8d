import time

import numpy as np
import pytest

from srm_ripple import RunConfig, train
from srm_ripple.drive import SimulationTrace

# criterion lines collected by test_acceptance, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config():
    return RunConfig()


@pytest.fixture(scope="session")
def baseline(config):
    t0 = time.perf_counter()
    trace = config.simulate(None)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def trained(config, baseline):
    """Triangular compensator trained for the full budget."""
    t0 = time.perf_counter()
    result = train(config, shape="triangular", ripple_limit=0.0)
    return result, time.perf_counter() - t0 + baseline[1]


def synthetic_trace(torque_fn, revolutions=6, omega=50.0, samples_per_rev=6000, speed_wobble=0.0, i_ref=10.0):
    """Trace with prescribed torque(theta) and a possibly non-uniform rotor speed."""
    n = revolutions * samples_per_rev + 1
    u = np.linspace(0.0, revolutions * 2 * np.pi, n)
    # theta(u) monotone; wobble makes angle non-uniform in time
    theta = u + speed_wobble * np.sin(u)
    time_ = u / omega
    data = np.zeros((n, 9))
    data[:, 0] = time_
    data[:, 1] = theta
    data[:, 2] = np.gradient(theta, time_)
    data[:, 3] = i_ref
    data[:, 8] = torque_fn(theta)
    return SimulationTrace(data=data, dt=float(time_[1] - time_[0]))

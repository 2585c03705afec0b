import numpy as np
import pytest

from fcsim.domain import DeviceParams, default_grids, matched_input_photon, mu_parameters

# mu = 0 device used throughout: tau^2 = -(s_p - s_a)(s_p - s_b) = 1
CANON = DeviceParams(s_a=0.5, s_b=3.0, s_p=1.0, tau=1.0)


def at_strength(params, strength):
    """Copy of params with epsilon set so that r0_tilde * epsilon = strength."""
    return params.with_epsilon(strength / mu_parameters(params).r0_tilde)


@pytest.fixture(scope="session")
def canon():
    return CANON


@pytest.fixture(scope="session")
def grids48():
    return default_grids(CANON, 48)


@pytest.fixture(scope="session")
def grids64():
    return default_grids(CANON, 64)


@pytest.fixture(scope="session")
def photon64(grids64):
    return matched_input_photon(CANON, grids64[0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one verdict line per criterion; lines are echoed in the terminal summary."""
    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from iterlog.grid import GridSpec, UDomainSpec


@pytest.fixture
def small_grid():
    return GridSpec(n_t=40, n_x=41)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fvp_udom():
    return UDomainSpec.fvp(40)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def record(number, passed, detail, seconds=None):
        timing = "" if seconds is None else f" [{seconds:.1f}s]"
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} {detail}{timing}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def report(criterion: str, name: str, passed: bool, detail: str = "") -> bool:
    """Record one acceptance line; printed live and repeated in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {name} {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion():
    """``criterion(n, title, passed, detail)`` prints one verdict line and keeps it for the summary."""

    def record(n, title, passed, detail=""):
        line = f"criterion {n} [{'PASS' if passed else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        print(line)
        _CRITERIA.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

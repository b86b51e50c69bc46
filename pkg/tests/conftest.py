import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str, elapsed: float, budget: float):
        line = (f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail} | "
                f"runtime {elapsed:.2f} s (budget {budget:g} s)")
        _ACCEPTANCE.append((number, line))
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)

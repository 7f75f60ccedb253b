import numpy as np
import pytest

from slowfast.noise import NoiseStream

ACCEPTANCE_LINES = []


@pytest.fixture
def stream():
    return NoiseStream(2024, ("tests",))


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict, printed in the terminal summary."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

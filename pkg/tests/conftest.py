import numpy as np
import pytest

from pucktrack.scene import scenario, simulate


@pytest.fixture(scope="session")
def short_static():
    """Two seconds of the static-camera scene."""
    return simulate(scenario("static", 5, duration_s=2.0))


@pytest.fixture(scope="session")
def short_moving():
    return simulate(scenario("moving", 6, duration_s=2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for the end-of-run acceptance summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

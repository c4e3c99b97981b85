import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from causalsig.synthetic import synthetic_candles
from klines_mock import server_factory  # noqa: F401  (fixture)

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def candles_small():
    return synthetic_candles(3000, "tests-small")


@pytest.fixture(scope="session")
def candles_10k():
    return synthetic_candles(10_000, "tests-10k")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; the lines are echoed in the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

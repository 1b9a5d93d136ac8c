import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("radtails", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("radtails")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA: list[tuple[int, str]] = []


@pytest.fixture(scope="session")
def criterion():
    """Record and print one ``PASS/FAIL criterion N: ...`` line."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        CRITERIA.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA, key=lambda x: x[0]):
            terminalreporter.write_line(line)

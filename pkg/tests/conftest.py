import numpy as np
import pytest

from blindcal.error_models import ErrorModelSpec
from blindcal.measurement_map import build_map


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def nine_spec():
    return ErrorModelSpec(3)


@pytest.fixture(scope="session")
def nine_map(nine_spec):
    return build_map(nine_spec)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; printed again in the terminal summary."""
    def report(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from __future__ import annotations

import pytest
from hypothesis import strategies as st

from macsim.dyadic import Dyadic


def dyadics(max_exp: int = 12, lo: int = 0, hi: int = 1):
    """Dyadic rationals in [lo, hi] with denominators up to 2**max_exp."""
    return st.integers(0, max_exp).flatmap(
        lambda e: st.integers(lo << e, hi << e).map(lambda k: Dyadic(k, e)))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance() -> list[str]:
    """Sink for acceptance verdict lines, echoed in the terminal summary."""
    return _ACCEPTANCE


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "acceptance: full-scale acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter) -> None:
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

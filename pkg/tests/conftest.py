"""Session-wide cache of the expensive n=1000 tables (each takes tens of seconds)."""
from __future__ import annotations

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from onemax_rates.dp import Criterion, build_policy  # noqa: E402
from onemax_rates.kernel import Dist, ProblemContext  # noqa: E402


class _Tables:
    def __init__(self):
        self._store = {}

    def get(self, n, lam, dist, crit="opt"):
        key = (n, lam, Dist(dist), Criterion(crit))
        if key not in self._store:
            self._store[key] = build_policy(ProblemContext(n, lam), key[2], key[3])
        return self._store[key]


@pytest.fixture(scope="session")
def tables():
    return _Tables()


_REPORT: list[str] = []


@pytest.fixture
def report():
    """Record a one-line verdict that is echoed in the terminal summary."""
    def emit(ok: bool | None, name: str, detail: str) -> None:
        tag = {True: "PASS", False: "FAIL", None: "INFO"}[ok]
        line = f"{tag} {name}: {detail}"
        _REPORT.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)

"""Shared fixtures: scenario runs are expensive, so each one happens once per session."""

from __future__ import annotations

import io

import pytest

from touchsim.harness.scenario import SHIPPED_SCENARIOS, run_scenario
from touchsim.trace import export_trace

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def trace_bytes(trace) -> bytes:
    buf = io.StringIO(newline="")
    export_trace(trace, buf)
    return buf.getvalue().encode("utf-8")


class _Runs:
    def __init__(self):
        self._cache = {}

    def get(self, name: str, policy: str | None = None):
        key = (name, policy)
        if key not in self._cache:
            self._cache[key] = run_scenario(name, policy=policy)
        return self._cache[key]


@pytest.fixture(scope="session")
def runs() -> _Runs:
    return _Runs()


@pytest.fixture(scope="session")
def shipped_traces(runs):
    """(label, trace) for every shipped scenario, with and without the default firewall."""
    out = []
    for name in SHIPPED_SCENARIOS:
        out.append((name, runs.get(name)[1].bus.trace))
        out.append((f"{name}+firewall", runs.get(name, "default")[1].bus.trace))
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

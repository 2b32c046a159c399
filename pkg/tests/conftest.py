"""Shared pytest wiring.

The acceptance suite records one verdict line per release criterion; the
hook below prints them as a block after the normal test summary so the
pass/fail status of every criterion is visible in one place.
"""

import pytest

_criterion_lines: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Recorder for release checks: log a PASS/FAIL line, then assert."""

    def record(name: str, passed: bool, detail: str) -> None:
        _criterion_lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("release criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)

"""Shared fixtures: acceptance results are collected and printed as a summary."""

import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record ``(number, name, passed, detail)`` for the end-of-run summary."""

    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        _RESULTS[number] = (name, bool(passed), detail)
        print(f"criterion {number} {'PASS' if passed else 'FAIL'} {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        name, passed, detail = _RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        )

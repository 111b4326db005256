"""Collects one pass/fail line per acceptance criterion for the run summary."""

import contextlib

import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def record(number, title):
        try:
            yield
        except BaseException:
            ACCEPTANCE[number] = f"[FAIL] criterion {number}: {title}"
            raise
        ACCEPTANCE[number] = f"[PASS] criterion {number}: {title}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])

"""Shared pytest plumbing: the acceptance suite records one verdict line
per criterion and they are echoed together in the terminal summary."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance verdicts: returns ``ok`` so callers can
    ``assert acceptance(n, ok, detail)`` and still fail the test."""

    def record(number: int, ok: bool, detail: str) -> bool:
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {number:02d} {verdict}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

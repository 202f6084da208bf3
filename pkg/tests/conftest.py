from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list = []


@pytest.fixture
def report(capsys):
    """Print an acceptance verdict line immediately and again in the session summary."""

    def _report(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

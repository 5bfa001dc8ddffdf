import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_COUNT = 10


@pytest.fixture
def report():
    """Record an acceptance verdict; the summary prints one line per criterion."""

    def record(k: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[k] = (bool(passed), detail)
        print(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, ACCEPTANCE_COUNT + 1):
        passed, detail = ACCEPTANCE.get(k, (False, "not run or crashed before reporting"))
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

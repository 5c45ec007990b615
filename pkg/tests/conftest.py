import numpy as np
import pytest

# Acceptance tests register one line per criterion here; the terminal summary
# prints them so a plain `pytest -v` run shows the gate verdicts.
ACCEPTANCE_LINES = []


def record_criterion(num: int, name: str, passed: bool, detail: str = "") -> None:
    tag = "PASS" if passed else "FAIL"
    line = f"criterion {num} [{name}]: {tag}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append((num, line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

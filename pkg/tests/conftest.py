"""Shared fixtures: the acceptance report printed at the end of the session."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(criterion, label, passed, detail=""):
        line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import pytest

# Acceptance criteria register one line each here; printed after the run.
ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def acceptance():
    def record(key, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        ACCEPTANCE_LINES[key] = f"{status} {key}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (len(k), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

import pytest

_LINES = []


@pytest.fixture
def report():
    """Record a one-line criterion verdict, echoed in the terminal summary."""

    def _report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _LINES.append((number, line))
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)

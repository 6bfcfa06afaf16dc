import pytest

_LINES: list[str] = []


@pytest.fixture
def record():
    """Collect an acceptance line; all lines are printed in the terminal summary."""

    def _rec(criterion: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {criterion}" + (f": {detail}" if detail else "")
        _LINES.append(line)
        print(line)
        return ok

    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for ln in _LINES:
        terminalreporter.write_line(ln)

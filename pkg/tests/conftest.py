import pytest

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Record a PASS/FAIL line for an acceptance check, then assert it."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

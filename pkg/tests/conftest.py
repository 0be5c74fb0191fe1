import pytest

_LINES: list[str] = []


@pytest.fixture
def record():
    """Log one PASS/FAIL line per acceptance criterion and return the verdict."""

    def f(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return f


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

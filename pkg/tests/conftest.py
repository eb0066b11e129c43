import pytest

_LINES: list[str] = []


@pytest.fixture
def record():
    """Append one summary line per acceptance criterion."""

    def _add(line: str) -> None:
        _LINES.append(line)
        print(line)

    return _add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

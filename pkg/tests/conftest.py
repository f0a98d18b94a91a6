import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def acceptance(request):
    """``record(criterion, passed, detail)`` collects one summary line per criterion."""
    lines = request.config.stash[_LINES_KEY]

    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"ACCEPTANCE [{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        lines.append((criterion, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(line)

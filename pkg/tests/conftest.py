import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Print one PASS/FAIL line per acceptance criterion and repeat it in the summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

import pytest

from twinforge.fom import CuboidGrid

VERDICTS = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def coarse_grid():
    """Small grid for fast solver checks."""
    return CuboidGrid(nx=6, ny=4, nz=4)


@pytest.fixture
def verdict(request):
    """Record and assert one acceptance criterion; lines are echoed in the summary."""
    lines = request.config.stash.setdefault(VERDICTS, [])

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)

import pytest

_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion_log(request):
    """Append one ``(number, passed, detail)`` line for the acceptance summary."""
    lines = request.config.stash.setdefault(_KEY, [])

    def log(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)

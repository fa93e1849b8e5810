import pytest

ACCEPTANCE = []


@pytest.fixture
def record():
    """Log one acceptance line: ``record(number, ok, detail)``."""
    def _record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append((number, line))
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

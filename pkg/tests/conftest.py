import pytest

_verdicts = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line for the acceptance summary; returns the pass flag."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _verdicts.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_verdicts):
        terminalreporter.write_line(line)

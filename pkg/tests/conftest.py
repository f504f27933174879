import pytest

ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line: ``verdict(k, passed, detail)``."""

    def record(k, passed, detail):
        ACCEPTANCE[k] = (bool(passed), detail)
        print(f"criterion {k}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'} | {detail}")

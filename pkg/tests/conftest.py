import pytest

# (criterion, passed, detail) lines filled in by test_acceptance
ACCEPTANCE = []


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")

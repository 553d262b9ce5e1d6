import pytest

# criterion id -> (passed, detail); filled by the acceptance suite
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(key: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[key] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")

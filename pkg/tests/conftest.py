import pytest

# criterion -> (status, detail), filled by test_acceptance
ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    def record(name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE[name] = (status, detail)
        print(f"{status} {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: (not k[0].isdigit(), k)):
        status, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{status} {name}: {detail}")

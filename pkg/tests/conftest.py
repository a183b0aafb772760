import pytest

# criterion label -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[label] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split(".")[0])):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")

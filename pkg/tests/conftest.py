import pytest

# (criterion, label, passed, detail), appended by tests/test_acceptance.py
ACCEPTANCE: list[tuple[str, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, label, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(r[0].split(".")[0]), r[0], r[1])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit:<4} {label}: {detail}")


@pytest.fixture
def acceptance():
    def check(criterion: str, label: str, ok: bool, detail: str) -> None:
        ACCEPTANCE.append((criterion, label, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  criterion {criterion} {label}: {detail}")
        assert ok, f"criterion {criterion} {label}: {detail}"

    return check

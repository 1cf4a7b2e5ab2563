"""Collects acceptance verdicts and prints them at the end of the session."""

ACCEPTANCE: dict = {}


def record(criterion: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n[1:])):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}  {detail}")

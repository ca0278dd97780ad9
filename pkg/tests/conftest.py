import pytest

CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record ``(label, passed, detail)`` so the summary shows one line per acceptance criterion."""
    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}"
        CRITERIA[label] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=lambda s: (int(s.rstrip("abc")), s)):
        terminalreporter.write_line(CRITERIA[label])

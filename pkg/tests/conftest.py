import pytest

_REPORT: list[tuple[int, str]] = []


@pytest.fixture
def report():
    """Record one result line for the acceptance summary.

    ``passed`` may be ``None`` for informational lines.
    """

    def record(number: int, title: str, passed: bool | None, detail: str) -> bool | None:
        tag = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        line = f"[{tag}] {number:2d}. {title}: {detail}"
        _REPORT.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_REPORT, key=lambda item: item[0]):
        terminalreporter.write_line(line)

import pytest

_CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def criterion_log():
    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        _CRITERIA.append((number, title, passed, detail))
        print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
    return record


@pytest.fixture(scope="session")
def toy_cache():
    """Trained toy cells shared between the training-gate criteria."""
    return {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA):
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})")

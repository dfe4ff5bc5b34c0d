import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict_line():
    """Record (and print) the one-line result of an acceptance criterion."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE[n] = line
        print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])

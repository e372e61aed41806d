import pytest

from beeprv.uxs import UxsCache

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def cache():
    c = UxsCache.load()
    c.certify_all()
    return c


@pytest.fixture
def criterion():
    """Records one PASS/FAIL line per acceptance criterion."""

    class Recorder:
        def __call__(self, number, ok, detail):
            ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
            print(ACCEPTANCE[number])
            return ok

    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])

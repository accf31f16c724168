import pytest

_REPORT_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = {}


@pytest.fixture
def acceptance_report(request):
    """Recorder for acceptance criteria: ``report(number, passed, detail)``."""
    results = request.config.stash[_REPORT_KEY]

    def record(number, passed, detail):
        results[number] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_REPORT_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "N/A"}[report.outcome]
        _criteria.setdefault((number, title), []).append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), results in sorted(_criteria.items(), key=lambda kv: str(kv[0][0])):
        for name, status in results:
            terminalreporter.write_line(f"criterion {number} {status:4} {title} ({name})")

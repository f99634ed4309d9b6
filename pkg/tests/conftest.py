"""Shared pytest hooks: one PASS/FAIL line per acceptance criterion."""

import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "seconds": 0.0})
    if report.when == "call":
        entry["seconds"] += report.duration
    if report.failed or report.skipped:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {e['title']} ({e['seconds']:.1f} s)")

"""Shared pytest hooks: one pass/fail line per acceptance criterion."""

import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    n = marker.args[0]
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    ok = report.passed and _CRITERIA.get(n, (True, ""))[0]
    prev = _CRITERIA.get(n, (True, ""))[1]
    _CRITERIA[n] = (ok, "; ".join(d for d in (prev, detail) if d))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

import pytest

CRITERIA = {
    1: "waypoint gate",
    2: "homing trigger",
    3: "descent handover",
    4: "docking success statistics",
    5: "docking duration",
    6: "inspection timing and coverage",
    7: "EKF consistency",
    8: "detection-count coverage",
    9: "bit-pattern ordering",
    10: "batch determinism",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number this test verifies")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        ok = report.passed
        _outcomes.setdefault(n, []).append(ok)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {title:<32} {status}")

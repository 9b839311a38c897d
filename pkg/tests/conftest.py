import pytest

CRITERIA = {
    1: "exact solution, unique case",
    2: "rate envelope from the closed-form lambda",
    3: "mixed-norm decay over jointly connected windows",
    4: "necessity of joint connectivity",
    5: "non-unique case limit",
    6: "asynchronous convergence",
    7: "async/sync reduction on common grids",
    8: "tracking a time-varying system",
    9: "distributed least squares",
    10: "norm and product property suites",
    11: "determinism of recipes",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or not report.passed:
        _outcomes.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status:7s} {label}")

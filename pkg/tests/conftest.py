import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    details = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _results.setdefault(number, (title, []))[1].append((status, details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, parts = _results[number]
        statuses = {s for s, _ in parts}
        # several tests may share one criterion; any failure wins
        status = "FAIL" if "FAIL" in statuses else ("SKIP" if "SKIP" in statuses else "PASS")
        details = "; ".join(d for _, d in parts if d)
        line = f"criterion {number}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))

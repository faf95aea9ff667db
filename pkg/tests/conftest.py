import pytest

_criteria: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    notes = "; ".join(v for k, v in item.user_properties if k == "detail")
    if report.failed and not notes:
        notes = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    _criteria[number] = ("PASS" if report.passed else "FAIL", title, notes)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, notes = _criteria[number]
        terminalreporter.write_line(f"{status} criterion {number:2d}: {title}" + (f" [{notes}]" if notes else ""))

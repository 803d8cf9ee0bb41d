"""Collects acceptance-criterion outcomes and prints one line per criterion at the end of the run."""

import pytest

_OUTCOMES: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if rep.passed else "FAIL"
    if number in _OUTCOMES:
        # several tests may share a criterion; any failure fails it
        prev_status, _, prev_measured = _OUTCOMES[number]
        status = "FAIL" if "FAIL" in (status, prev_status) else "PASS"
        measured = "; ".join(m for m in (prev_measured, measured) if m)
    _OUTCOMES[number] = (status, title, measured)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_OUTCOMES):
        status, title, measured = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title}" + (f" [{measured}]" if measured else ""))

"""Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary.

Tests tagged ``@pytest.mark.criterion(n, title)`` report their real outcome;
a ``measured`` user property (``record_property``) is appended as detail.
"""

import pytest

_results: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        detail = dict(item.user_properties).get("measured", "")
        verdict = "PASS" if rep.passed else "FAIL"
        _results[number] = (title, verdict, detail)
        print(f"\n{verdict} criterion {number}: {title}" + (f" [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, verdict, detail = _results[number]
        line = f"{verdict} criterion {number:2d}: {title}" + (f" [{detail}]" if detail else "")
        terminalreporter.write_line(line, green=verdict == "PASS", red=verdict == "FAIL")

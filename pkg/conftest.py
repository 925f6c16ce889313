"""Session-wide acceptance summary.

Tests marked ``criterion`` certify one release criterion each; this
renders a one-line PASS/FAIL verdict per criterion after the run,
covering both the store suite and the client suite.
"""

from __future__ import annotations

_outcomes: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): names the release criterion a test proves"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker and "criterion" not in dict(item.user_properties):
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    label = dict(getattr(report, "user_properties", [])).get("criterion")
    if not label:
        return
    if report.failed:
        _outcomes[report.nodeid] = (label, "FAIL")
    elif report.when == "call" and report.nodeid not in _outcomes:
        _outcomes[report.nodeid] = (label, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _outcomes.values():
        terminalreporter.write_line(f"[{status}] {label}")

"""Per-criterion PASS/FAIL summary for the acceptance module."""

from __future__ import annotations

import pytest

_OUTCOMES: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_finish(session):
    for item in session.items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            entry = _OUTCOMES.setdefault(num, {"title": title, "tests": set(), "failed": set(), "done": set()})
            entry["tests"].add(item.nodeid)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _OUTCOMES[mark.args[0]]
    if rep.failed:
        entry["failed"].add(item.nodeid)
    entry.setdefault("detail", [])
    if rep.when == "call":
        entry["detail"] += [str(v) for k, v in item.user_properties if k == "detail"]
    if rep.when == "teardown":
        entry["done"].add(item.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        e = _OUTCOMES[num]
        if e["failed"]:
            status = "FAIL"
        elif e["done"] >= e["tests"]:
            status = "PASS"
        else:
            status = "NOT RUN"
        detail = "; ".join(e.get("detail", []))
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {e['title']}" + (f" ({detail})" if detail else ""))

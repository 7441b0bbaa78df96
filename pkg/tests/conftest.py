"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the summary.

Acceptance tests carry ``@pytest.mark.criterion(n, "title")``. A criterion
passes only if every test tagged with it passes. Tests may attach a short
measurement string through the ``criterion_detail`` fixture.
"""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def criterion_detail(request):
    marker = request.node.get_closest_marker("criterion")
    n = marker.args[0] if marker else None

    def add(text: str) -> None:
        if n is not None:
            _results.setdefault(n, {"title": marker.args[1], "ok": True, "details": []})["details"].append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args[0], marker.args[1]
    entry = _results.setdefault(n, {"title": title, "ok": True, "details": []})
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        r = _results[n]
        line = f"[{'PASS' if r['ok'] else 'FAIL'}] criterion {n}: {r['title']}"
        if r["details"]:
            line += " | " + "; ".join(r["details"])
        terminalreporter.write_line(line)

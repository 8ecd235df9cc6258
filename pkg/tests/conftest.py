"""Shared fixtures and the per-criterion PASS/FAIL summary."""

from __future__ import annotations

import pytest

_CRITERIA: dict[int, str] = {
    1: "strong-case contraction and budget",
    2: "non-strong error bound",
    3: "line-search evaluation budget",
    4: "omega sequence sandwich and recursion",
    5: "hard-instance certification",
    6: "zero-chain and lower-bound mechanism",
    7: "scaling slopes",
    8: "structural suite",
    9: "determinism",
}
_OUTCOMES: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            status = "xfail"
        else:
            status = rep.outcome
        _OUTCOMES.setdefault(n, []).append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        runs = _OUTCOMES.get(n)
        if not runs:
            continue
        ok = all(s == "passed" for _, s in runs)
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {n} ({_CRITERIA[n]}): {verdict}"
        failed = [f"{name} [{s}]" for name, s in runs if s != "passed"]
        if failed:
            line += " -- " + ", ".join(failed)
        tr.write_line(line)

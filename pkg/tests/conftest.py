"""Acceptance-criterion bookkeeping.

Tests tagged ``@pytest.mark.criterion(n, "title")`` are summarised at the end
of the run as one PASS/FAIL line per criterion.  A test may attach a short
measurement string through the ``detail`` fixture.
"""
import pytest

_RESULTS = {}  # n -> [title, passed, [details]]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.fixture
def detail(request):
    """Call with a string to attach it to the criterion summary line."""
    notes = []
    request.node.acceptance_detail = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, title = mark.args
        entry = _RESULTS.setdefault(n, [title, True, []])
        entry[1] = entry[1] and rep.passed
        entry[2].extend(getattr(item, "acceptance_detail", []))
        if not rep.passed:
            entry[2].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok, notes = _RESULTS[n]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}"
        if notes:
            line += " -- " + "; ".join(notes)
        terminalreporter.write_line(line)

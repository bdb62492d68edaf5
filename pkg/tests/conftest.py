"""Shared pytest hooks: a one-line-per-criterion acceptance summary."""
import pytest

_DETAILS = {}


@pytest.fixture
def record(request):
    """Attach a short human-readable result line to the running test."""

    def _record(text):
        _DETAILS[request.node.nodeid] = text

    return _record


def pytest_terminal_summary(terminalreporter):
    reports = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_criterion_" in rep.nodeid and (rep.when == "call" or outcome == "error"):
                reports.append((rep.nodeid, outcome))
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in sorted(reports, key=lambda r: int(r[0].split("test_criterion_")[1].split("_")[0])):
        n = nodeid.split("test_criterion_")[1].split("_")[0]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {_DETAILS.get(nodeid, '')}")

"""Shared test plumbing: the acceptance-criteria scoreboard.

test_acceptance.py records one or more sub-checks per numbered criterion;
after the run a summary section prints one pass/fail line per criterion.
A criterion line reads FAIL if any sub-check failed outright, XFAIL if
the only deviations are expected (strict xfail) ones, PASS otherwise.
"""

from collections import OrderedDict

_SCOREBOARD: "OrderedDict[int, list]" = OrderedDict()


def record_acceptance(criterion: int, label: str, status: str, detail: str = "") -> None:
    assert status in ("pass", "fail", "xfail")
    _SCOREBOARD.setdefault(int(criterion), []).append((label, status, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _SCOREBOARD:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(_SCOREBOARD):
        entries = _SCOREBOARD[criterion]
        statuses = {status for _, status, _ in entries}
        if "fail" in statuses:
            verdict = "FAIL"
        elif "xfail" in statuses:
            verdict = "XFAIL"
        else:
            verdict = "PASS"
        tr.write_line(f"criterion {criterion:2d}: {verdict}")
        for label, status, detail in entries:
            mark = {"pass": " ok ", "fail": "FAIL", "xfail": "xfl "}[status]
            suffix = f" -- {detail}" if detail else ""
            tr.write_line(f"    [{mark}] {label}{suffix}")

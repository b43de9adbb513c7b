"""Shared pytest wiring.

The only extra here is a terminal summary that lists every acceptance
criterion with its outcome, so a full run ends with one PASS/FAIL line
per criterion regardless of verbosity.
"""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    rows = []
    for bucket, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(bucket, []):
            match = _CRITERION.search(report.nodeid)
            if match:
                rows.append((int(match.group(1)), label, match.group(2).replace("_", " ")))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, label, title in sorted(rows):
        terminalreporter.write_line(f"criterion {number}: {label}  ({title})")

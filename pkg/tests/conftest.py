"""Replay acceptance announcements as the verbose result word.

Each criterion test calls ``announce`` as its last statement, which stores
a ``criterion N PASS - ...`` line in ``common.CRITERION_LINES``.  Captured
stdout of passing tests is normally discarded, so this hook surfaces the
line where ``pytest -v`` prints the outcome; failures get an explicit
``criterion N FAIL`` word next to the standard traceback.
"""

import re

from common import CRITERION_LINES

_CRITERION = re.compile(r"::test_criterion_0*(\d+)")


def pytest_report_teststatus(report, config):
    match = _CRITERION.search(report.nodeid)
    if match is None or report.when != "call":
        return None
    number = int(match.group(1))
    if report.passed and number in CRITERION_LINES:
        return "passed", ".", CRITERION_LINES[number]
    if report.failed:
        return "failed", "F", f"criterion {number} FAIL"
    return None

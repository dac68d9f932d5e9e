import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.failed:
        acceptance_log.OUTCOMES[key] = "PASS" if report.passed else "FAIL"
        if report.failed and int(m.group(1)) not in acceptance_log.DETAILS:
            # failed before measuring anything, e.g. missing data
            msg = getattr(report.longrepr, "reprcrash", None)
            if msg is not None:
                acceptance_log.DETAILS[int(m.group(1))] = [msg.message.splitlines()[0]]


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, title), outcome in sorted(acceptance_log.OUTCOMES.items()):
        tr.write_line(f"criterion {num:>2}  {outcome}  {title}")
        for line in acceptance_log.DETAILS.get(num, []):
            tr.write_line(f"        {line}")

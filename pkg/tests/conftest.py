import re
from collections import defaultdict

_CRITERION = re.compile(r"test_criterion_(\d+)([a-z]?)_(\w+)")
_outcomes: dict[int, list[tuple[str, str]]] = defaultdict(list)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = m.group(3).replace("_", " ")
        _outcomes[int(m.group(1))].append((label, "PASS" if report.outcome == "passed" else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        parts = _outcomes[number]
        verdict = "PASS" if all(v == "PASS" for _, v in parts) else "FAIL"
        if len(parts) == 1:
            detail = parts[0][0]
        else:
            detail = "; ".join(f"{label}: {v}" for label, v in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  ({detail})")

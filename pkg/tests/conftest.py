"""Prints one pass/fail line per acceptance criterion at the end of the run."""

_VERDICTS = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    lines = [v for k, v in report.user_properties if k == "acceptance"]
    if lines:
        _VERDICTS.append(("PASS" if report.passed else "FAIL", lines[0]))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, line in sorted(_VERDICTS, key=lambda v: int(v[1].split()[1].rstrip(":"))):
        terminalreporter.write_line(f"{status}  {line}")

"""Shared pytest wiring: prints the acceptance summary block."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion, after the run."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            when = getattr(report, "when", "call")
            if when != "call" and not report.failed:
                continue
            name = nodeid.split("::")[-1]
            _, _, number, label = name.split("_", 3)
            verdict = "PASS" if report.passed else "FAIL"
            # a setup error must not mask a real call verdict
            if int(number) not in lines or verdict == "FAIL":
                lines[int(number)] = (label.replace("_", " "), verdict)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        label, verdict = lines[number]
        terminalreporter.write_line(f"criterion {number} ({label}): {verdict}")

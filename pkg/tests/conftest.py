"""Shared pytest plumbing: collects acceptance-criterion results so that one
pass/fail line per criterion is printed in the terminal summary even when
output capture is on."""

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

"""Shared pytest plumbing for the test suite.

Collects the per-criterion verdict lines emitted by the acceptance tests and
replays them in the terminal summary, where they stay visible under default
output capture.
"""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines:
        terminalreporter.write_line(line)

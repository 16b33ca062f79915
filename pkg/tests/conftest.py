"""Shared pytest plumbing.

The acceptance tests register one scoreboard line each; printing them from
the terminal-summary hook keeps the tally visible under output capture.
"""

acceptance_lines = []


def record_acceptance(line: str):
    acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)

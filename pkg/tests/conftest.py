"""Shared test configuration: the acceptance-criteria reporter.

Acceptance tests record one line per criterion; the lines print in a
dedicated section of the terminal summary regardless of capture settings.
"""

_criterion_lines: dict[int, str] = {}


def record_criterion(number: int, verdict: str, description: str) -> None:
    _criterion_lines[number] = f"criterion {number:2d} {verdict:4s} {description}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_lines):
        terminalreporter.write_line(_criterion_lines[number])

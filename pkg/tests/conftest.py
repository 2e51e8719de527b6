"""Shared pytest wiring: acceptance criteria get one visible summary
line each, printed after the run so normal output capture cannot hide
them."""

from contextlib import contextmanager

_acceptance_lines = []


@contextmanager
def criterion(name):
    """Record a pass/fail line for one acceptance criterion."""
    try:
        yield
    except BaseException:
        _acceptance_lines.append(f"{name}: FAIL")
        raise
    _acceptance_lines.append(f"{name}: PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)

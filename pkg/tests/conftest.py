import functools

import pytest

from blowuplab import presets
from blowuplab.evolve import evolve, make_initial_data

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one pass/fail line per acceptance criterion, then assert."""

    def _report(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def preset_run(name: str, **overrides):
    cfg = presets.get(name).config(**overrides)
    return evolve(make_initial_data(cfg), cfg)

import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maxsheet import gallery  # noqa: E402
from maxsheet.evolution import evolve  # noqa: E402

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def cached_entry(name):
    return gallery.build(name)


@functools.lru_cache(maxsize=None)
def cached_sheet(name):
    return evolve(cached_entry(name).data)


@pytest.fixture(params=gallery.NAMES)
def entry_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[0][2:])):
            terminalreporter.write_line(line)

import pytest

from i2a_lab.sokoban.core import parse_level

CORRIDOR = """
#######
#@ $ .#
#######
"""

TWO_BOX = """
#######
#     #
# $$  #
# ..@ #
#######
"""


@pytest.fixture
def corridor():
    return parse_level(CORRIDOR)


@pytest.fixture
def two_box():
    return parse_level(TWO_BOX)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

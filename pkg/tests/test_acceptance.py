"""The ten acceptance criteria at their documented tolerances.

Each test prints one ``criterion N [PASS|FAIL|SKIP] ...`` line; the lines are
also collected and repeated in the terminal summary.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from kdvfeedback.acceptance import FAIL, Suite, run_criterion


@pytest.fixture(scope="module")
def suite():
    return Suite()


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(suite, number):
    res = run_criterion(number, suite)
    line = res.line()
    ACCEPTANCE_LINES[number] = line
    print(line)
    for name, status in res.checks.items():
        print(f"    {name}: {status}")
    assert res.status != FAIL, line

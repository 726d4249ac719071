import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kdvfeedback.kernel import synthesize  # noqa: E402
from kdvfeedback.transform import TransformOperator  # noqa: E402

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def reference():
    """Basis, kernel and transform at L = 3, lambda = 1, N = 30, nx = 512."""
    basis, kern = synthesize(3.0, 1.0, 30, 512)
    return basis, kern, TransformOperator(kern)


@pytest.fixture(scope="session")
def small():
    """A cheap configuration for property tests: L = 3, lambda = 1, N = 8, nx = 128."""
    basis, kern = synthesize(3.0, 1.0, 8, 128)
    return basis, kern, TransformOperator(kern)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])

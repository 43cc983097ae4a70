import sys

import pytest

from latgas.coverings import perfect_coverings
from latgas.lattice import builtin_model


@pytest.fixture(scope="session")
def diamond():
    m = builtin_model("hyperdiamond-2d")
    return m, perfect_coverings(m, 4)


@pytest.fixture(scope="session")
def cross():
    m = builtin_model("cross")
    return m, perfect_coverings(m, 6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

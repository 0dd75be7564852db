import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("apnn", deadline=None, max_examples=40, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "apnn"))


@pytest.fixture
def rule30():
    from apnn.quadrature import gauss_legendre

    return gauss_legendre(30)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record one PASS/FAIL line per criterion; also echoed to the terminal summary."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

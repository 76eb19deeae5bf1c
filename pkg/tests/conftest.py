import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from granfin.fin import fin_preset  # noqa: E402
from granfin.rft import MediumModel  # noqa: E402


@pytest.fixture(scope="session")
def medium():
    return MediumModel(sigma_perp=1400.0, sigma_par=300.0, mode="sine")


@pytest.fixture(scope="session")
def constant_medium():
    return MediumModel(sigma_perp=1400.0, sigma_par=300.0, mode="constant")


@pytest.fixture(scope="session")
def origami():
    return fin_preset("origami-2.0mm")


@pytest.fixture(scope="session")
def rigid():
    return fin_preset("rigid")


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def _report(number, title, ok, detail="", info=False):
        tag = "INFO" if info else ("PASS" if ok else "FAIL")
        line = f"criterion {number:>2} {tag}: {title}" + (f" | {detail}" if detail else "")
        print(line)
        _ACCEPTANCE.setdefault(number, []).append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            for line in _ACCEPTANCE[number]:
                terminalreporter.write_line(line)

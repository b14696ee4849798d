import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from penning_md.core import NIST_TRAP, make_wall
from penning_md.equilibrium import lowest_equilibrium
from penning_md.modes import analyze_modes

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

W200 = 2 * np.pi * 200e3


@pytest.fixture(scope="session")
def trap():
    return NIST_TRAP


@pytest.fixture(scope="session")
def wall200(trap):
    return make_wall(trap, W200, alpha=0.5)


@pytest.fixture(scope="session")
def crystal20(trap, wall200):
    """Ground state and modes of N=20 at 200 kHz, delta/beta = 0.5."""
    eq = lowest_equilibrium(trap, wall200, 20)
    return eq, analyze_modes(eq, trap, wall200)


@pytest.fixture(scope="session")
def crystal7(trap, wall200):
    eq = lowest_equilibrium(trap, wall200, 7)
    return eq, analyze_modes(eq, trap, wall200)


# --- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_VERDICTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = dict(item.user_properties).get("measured", "")
        _VERDICTS.append((title, rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for title, outcome, detail in _VERDICTS:
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{word}  {title}" + (f"  [{detail}]" if detail else ""))

import numpy as np
import pytest

from erasable_records import junior_senior
from erasable_records.game import make_prisoners_dilemma, perfect_monitoring
from erasable_records.records import RoleStrategy, StrategyProfile, junior_senior_automaton

# high-precision root of the raw junior/senior system (40 digits, independent Newton solve)
REFERENCE = {
    (2.0, 1.0, 0.95, 0.90): dict(q=0.114571917891233, mu0=0.109566454709217, V0=0.139678395596388,
                                 V1=0.32869936412765),
    (3.0, 1.0, 0.99, 0.50): dict(q=0.294648456757169, mu0=0.648165723994572, V0=0.971258974110125,
                                 V1=2.59266289597829),
    (1.5, 0.5, 0.90, 0.80): dict(q=0.224425773703742, mu0=0.233963184371158, V0=0.303186826709774,
                                 V1=0.584907960927896),
}


@pytest.fixture(scope="session")
def base_eqm():
    return junior_senior.solve(2.0, 1.0, 0.95, 0.90)


@pytest.fixture(scope="session")
def base_env(base_eqm):
    return junior_senior.environment(base_eqm)


@pytest.fixture
def pd():
    game, _ = make_prisoners_dilemma(2.0, 1.0)
    return game, perfect_monitoring(game)


def constant_profile(p_cooperate, n=2, erase=0.0):
    s = RoleStrategy.constant(n, n, [p_cooperate, 1.0 - p_cooperate], 2, erase)
    return StrategyProfile.symmetric(s)


@pytest.fixture
def js_automaton():
    return junior_senior_automaton()


def all_d(n=2):
    return constant_profile(0.0, n)


def all_c(n=2):
    return constant_profile(1.0, n)


def uniform_mu(n=2):
    return np.full(n, 1.0 / n)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        n = int(report.nodeid.split("test_criterion_")[1].split("_")[0])
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[n] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")

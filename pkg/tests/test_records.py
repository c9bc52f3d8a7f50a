import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erasable_records.errors import DimensionMismatch, NonConvergence
from erasable_records.junior_senior import junior_senior_strategy, mu0_of_q
from erasable_records.records import (
    RecordAutomaton,
    RoleStrategy,
    StrategyProfile,
    average_action_distribution,
    average_payoff,
    build_kernel,
    junior_senior_automaton,
    length_automaton,
    self_consistent_distribution,
    stationary_distribution,
    stationary_residual,
)

from conftest import all_c, all_d, constant_profile


def test_junior_senior_steps():
    a = junior_senior_automaton()
    assert a.states[a.initial] == "Junior"
    assert a.next_state("Junior", "C") == "Senior"
    assert a.next_state("Senior", "D") == "Senior"
    assert a.next_state("Junior", "D") == "Junior"


def test_automaton_json_roundtrip():
    a = junior_senior_automaton()
    data = json.loads(json.dumps(a.to_json()))
    assert data["step"]["Junior"] == {"C": "Senior", "D": "Junior"}
    assert RecordAutomaton.from_json(data) == a


def test_automaton_rejects_partial_step():
    with pytest.raises(DimensionMismatch):
        RecordAutomaton.from_json({"states": ["a", "b"], "initial": "a",
                                   "step": {"a": {"x": "b"}, "b": {"x": "b", "y": "a"}}})


def test_erase_everything_gives_identity(pd, js_automaton):
    game, mon = pd
    prof = constant_profile(0.3, erase=1.0)
    k = build_kernel(js_automaton, prof[0], [0.4, 0.6], prof[1], mon, game)
    np.testing.assert_allclose(k, np.eye(2), atol=0)


def test_kernel_junior_promotion(pd, js_automaton):
    game, mon = pd
    s = junior_senior_strategy(0.5)
    k = build_kernel(js_automaton, s, [0.5, 0.5], s, mon, game)
    assert k[0, 1] == pytest.approx(0.5 * 0.5 + 0.5 * 1.0, abs=1e-15)
    # Monte Carlo over 10^6 matches
    rng = np.random.default_rng(11)
    opp_senior = rng.random(1_000_000) < 0.5
    coop = np.where(opp_senior, True, rng.random(1_000_000) < 0.5)
    assert abs(coop.mean() - 0.75) < 5 * np.sqrt(0.75 * 0.25 / 1e6)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_kernel_rows_and_support(seed, cap):
    from erasable_records.game import make_prisoners_dilemma, perfect_monitoring

    rng = np.random.default_rng(seed)
    game, _ = make_prisoners_dilemma(2, 1)
    mon = perfect_monitoring(game)
    a = length_automaton(("C", "D"), cap)
    n = a.n_states
    act = rng.dirichlet([1, 1], size=(n, n))
    own = RoleStrategy(act, np.zeros((n, 2)))
    opp = RoleStrategy(rng.dirichlet([1, 1], size=(n, n)), rng.random((n, 2)))
    k = build_kernel(a, own, rng.dirichlet(np.ones(n)), opp, mon, game)
    np.testing.assert_allclose(k.sum(axis=1), 1.0, atol=1e-10)
    for r in range(n):
        allowed = set(a.step[r])
        assert all(k[r, j] == 0 for j in range(n) if j not in allowed)


def test_stationary_identity_kernel():
    np.testing.assert_allclose(stationary_distribution(np.eye(3), 0.7), [1, 0, 0], atol=1e-15)


def test_stationary_two_state_closed_form():
    k = np.array([[0.25, 0.75], [0.0, 1.0]])
    direct = stationary_distribution(k, 0.9)
    assert direct[0] == pytest.approx(0.1 / 0.775, abs=1e-14)
    iterated = stationary_distribution(k, 0.9, method="iterate")
    np.testing.assert_allclose(iterated, direct, atol=1e-11)
    assert stationary_residual(direct, k, 0.9) <= 1e-10


def test_stationary_iteration_cap():
    k = np.array([[0.25, 0.75], [0.0, 1.0]])
    with pytest.raises(NonConvergence):
        stationary_distribution(k, 0.999, method="iterate", max_iter=3)


def test_length_automaton_geometric(pd):
    game, mon = pd
    cap, bd = 6, 0.8
    a = length_automaton(("C", "D"), cap)
    prof = constant_profile(0.4, n=cap + 1)
    k = build_kernel(a, prof[0], np.full(cap + 1, 1 / (cap + 1)), prof[1], mon, game)
    mu = stationary_distribution(k, bd)
    for j in range(cap):
        assert mu[j] == pytest.approx((1 - bd) * bd ** j, abs=1e-14)
    assert mu[cap] == pytest.approx(bd ** cap, abs=1e-14)


@pytest.mark.parametrize("bd", [0.3, 0.6, 0.9, 0.99])
@pytest.mark.parametrize("q", [0.0, 0.2, 0.7])
def test_self_consistent_matches_smaller_root(pd, js_automaton, q, bd):
    game, mon = pd
    prof = StrategyProfile.symmetric(junior_senior_strategy(q))
    mu0, mu1 = self_consistent_distribution(js_automaton, prof, mon, game, bd)
    assert mu0[0] == pytest.approx(mu0_of_q(q, bd), abs=1e-9)
    assert abs(mu0[0] - (1 - bd) - bd * mu0[0] ** 2 * (1 - q)) <= 1e-9
    np.testing.assert_array_equal(mu0, mu1)


def test_self_consistent_solved_eqm(base_eqm, base_env):
    e = base_env
    mu, _ = self_consistent_distribution(e["automaton"], e["profile"], e["monitoring"], e["game"], e["bar_delta"])
    assert mu[0] == pytest.approx(base_eqm.mu0, abs=1e-9)


def test_self_consistent_all_d_stays_empty(pd):
    game, mon = pd
    # D signals never leave the empty class
    a = junior_senior_automaton()
    mu, _ = self_consistent_distribution(a, all_d(), mon, game, 0.9)
    np.testing.assert_allclose(mu, [1, 0], atol=1e-15)


def test_self_consistent_full_cooperation(pd, js_automaton):
    game, mon = pd
    prof = StrategyProfile.symmetric(junior_senior_strategy(1.0))
    mu, _ = self_consistent_distribution(js_automaton, prof, mon, game, 0.9)
    assert mu[0] == pytest.approx(0.1, abs=1e-12)


def test_self_consistent_asymmetric(pd, js_automaton):
    game, mon = pd
    prof = StrategyProfile((junior_senior_strategy(0.3), junior_senior_strategy(0.6)))
    m0, m1 = self_consistent_distribution(js_automaton, prof, mon, game, (0.9, 0.8))
    # role 0 juniors are promoted by their own C play against role-1 juniors
    assert m0[0] == pytest.approx((1 - 0.9) / (1 - 0.9 * (1 - (m1[0] * 0.3 + m1[1]))), abs=1e-10)
    assert m1[0] == pytest.approx((1 - 0.8) / (1 - 0.8 * (1 - (m0[0] * 0.6 + m0[1]))), abs=1e-10)


@pytest.mark.parametrize("bd", [0.2, 0.5, 0.9, 0.999])
def test_mu0_strictly_decreasing_in_q(bd):
    qs = np.linspace(0, 1, 101)
    vals = np.array([mu0_of_q(q, bd) for q in qs])
    if bd < 0.5:
        # the mass is capped at one near q = 0
        vals = vals[vals < 1.0]
    assert np.all(np.diff(vals) < 0)


def test_average_actions():
    mu = np.array([0.3, 0.7])
    assert average_action_distribution((mu, mu), all_d(), 0)[0] == 0
    prof = StrategyProfile.symmetric(junior_senior_strategy(0.4))
    p = average_action_distribution((mu, mu), prof, 0)
    assert p[0] == pytest.approx(0.3 * (0.3 * 0.4 + 0.7), abs=1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)


def test_average_payoff_extremes(pd):
    game, _ = pd
    mu = np.array([0.5, 0.5])
    assert average_payoff((mu, mu), all_d(), game, 0) == 0
    assert average_payoff((mu, mu), all_c(), game, 0) == pytest.approx(1.0)


def test_strategy_validation():
    with pytest.raises(ValueError):
        RoleStrategy(np.full((2, 2, 2), 0.6), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        RoleStrategy(np.full((2, 2, 2), 0.5), np.full((2, 2), 1.5))

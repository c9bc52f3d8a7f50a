"""Continuation values over record states.

Values are discounted averages: V(r) = E[(1 - delta) u + delta V(next record)],
where the expectation runs over the opponent's record, both players' actions,
the realized signal and the erasure decision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence
from .records import RoleStrategy, StrategyProfile, build_kernel, role_view, validate_distribution

SOLVE_TOL = 1e-12
CERTIFY_TOL = 1e-8
TIE_TOL = 1e-13


@dataclass(eq=False)
class ValueFunction:
    values: np.ndarray
    states: tuple
    residual: float = 0.0
    iterations: int = 0
    greedy_actions: np.ndarray | None = None
    keep_signal: np.ndarray | None = None
    residual_trace: list = field(default_factory=list)

    def __getitem__(self, state):
        if isinstance(state, str):
            state = self.states.index(state)
        return float(self.values[state])

    def to_csv_rows(self):
        return [(s, float(v)) for s, v in zip(self.states, self.values)]


def _check_bounds(values, game, role, slack=1e-9):
    lo, hi = game.payoff_range(role)
    if np.any(values < lo - slack) or np.any(values > hi + slack):
        raise NonConvergence(f"values {values} escaped the payoff range [{lo}, {hi}]")


def _kept_continuation(values, automaton):
    """cont[r, s] = max(V(step(r, s)), V(r)): value of the better of keep and erase."""
    return np.maximum(values[automaton.step], values[:, None])


def action_values(values, automaton, view, delta):
    """Q[r, q, a]: one-shot value of action ``a`` followed by optimal erasure."""
    cont = _kept_continuation(values, automaton)
    return (1.0 - delta) * view.flow + delta * np.einsum("rqas,rs->rqa", view.signal, cont)


def _prescribed_values(values, automaton, view, strategy, delta):
    """Q_sigma[r, q]: one-shot value of following ``strategy`` (actions and erasure)."""
    e = strategy.erasure_rule
    cont = (1.0 - e) * values[automaton.step] + e * values[:, None]
    qa = (1.0 - delta) * view.flow + delta * np.einsum("rqas,rs->rqa", view.signal, cont)
    return np.einsum("rqa,rqa->rq", strategy.action_rule, qa)


def policy_value(automaton, profile: StrategyProfile, mu, monitoring, game, delta: float,
                 role: int = 0, tol: float = SOLVE_TOL) -> ValueFunction:
    """Value of following ``profile[role]`` against the population ``mu``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    own, opp = profile[role], profile[1 - role]
    mu_opp = validate_distribution(mu[1 - role])
    view = role_view(automaton, opp, monitoring, game, role)
    flow = np.einsum("q,rqa,rqa->r", mu_opp, own.action_rule, view.flow)
    kernel = build_kernel(automaton, own, mu_opp, opp, monitoring, game, role)
    n = automaton.n_states
    values = np.linalg.solve(np.eye(n) - delta * kernel, (1.0 - delta) * flow)
    residual = float(np.max(np.abs(values - (1.0 - delta) * flow - delta * kernel @ values)))
    if residual > tol:
        raise NonConvergence(f"policy evaluation residual {residual:.3e} above {tol:.1e}", residual=residual)
    _check_bounds(values, game, role)
    return ValueFunction(values, automaton.states, residual, 1)


def bellman(values, automaton, view, mu_opp, delta):
    return np.einsum("q,rq->r", mu_opp, action_values(values, automaton, view, delta).max(axis=2))


def value_iteration(automaton, opponent_strategy, mu_opp, monitoring, game, delta, role=0,
                    tol=SOLVE_TOL, max_iter=200_000, start=None):
    """Plain successive approximation; returns the value and the residual trace."""
    view = role_view(automaton, opponent_strategy, monitoring, game, role)
    values = np.zeros(automaton.n_states) if start is None else np.array(start, dtype=float)
    trace = []
    for _ in range(max_iter):
        nxt = bellman(values, automaton, view, mu_opp, delta)
        res = float(np.max(np.abs(nxt - values)))
        trace.append(res)
        values = nxt
        if res <= tol:
            return values, trace
    raise NonConvergence(f"value iteration stopped at residual {res:.3e}", residual=res, trace=trace[-20:])


def best_response_value(automaton, opponent_strategy: RoleStrategy, mu_opp, monitoring, game, delta: float,
                        role: int = 0, tol: float = SOLVE_TOL, max_iter: int = 1000) -> ValueFunction:
    """Optimal value against a fixed population, with optimal erasure.

    Howard policy iteration over (action per state pair, keep/erase per
    state-signal pair), finished by value iteration steps until the Bellman
    residual is below ``tol``. Ties in erasure keep the signal.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    mu_opp = validate_distribution(mu_opp)
    view = role_view(automaton, opponent_strategy, monitoring, game, role)
    n, n_opp, n_act = view.flow.shape
    rows = np.repeat(np.arange(n), automaton.n_signals)
    actions = np.full((n, n_opp), np.argmax(view.flow.sum(axis=1), axis=1)[:, None].repeat(n_opp, 1))
    keep = np.ones((n, automaton.n_signals), dtype=bool)
    values = np.zeros(n)
    for it in range(1, max_iter + 1):
        pick = np.eye(n_act)[actions]
        flow = np.einsum("q,rqa,rqa->r", mu_opp, pick, view.flow)
        w = np.einsum("q,rqa,rqas->rs", mu_opp, pick, view.signal)
        kernel = np.zeros((n, n))
        np.add.at(kernel, (rows, automaton.step.ravel()), (w * keep).ravel())
        kernel[np.arange(n), np.arange(n)] += (w * ~keep).sum(axis=1)
        values = np.linalg.solve(np.eye(n) - delta * kernel, (1.0 - delta) * flow)
        q = action_values(values, automaton, view, delta)
        best = q.max(axis=2)
        current = np.take_along_axis(q, actions[..., None], axis=2)[..., 0]
        new_actions = np.where(current >= best - TIE_TOL, actions, q.argmax(axis=2))
        new_keep = values[automaton.step] >= values[:, None] - TIE_TOL
        if np.array_equal(new_actions, actions) and np.array_equal(new_keep, keep):
            break
        actions, keep = new_actions, new_keep
    else:
        raise NonConvergence("policy iteration did not stabilise")
    trace = []
    for _ in range(10_000):
        nxt = bellman(values, automaton, view, mu_opp, delta)
        res = float(np.max(np.abs(nxt - values)))
        trace.append(res)
        values = nxt
        if res <= tol:
            break
    else:
        raise NonConvergence(f"Bellman residual {res:.3e} above {tol:.1e}", residual=res, trace=trace[-20:])
    _check_bounds(values, game, role)
    greedy = action_values(values, automaton, view, delta).argmax(axis=2)
    return ValueFunction(values, automaton.states, res, it, greedy,
                         values[automaton.step] >= values[:, None], trace)


@dataclass(eq=False)
class IncentiveReport:
    """One-shot deviation audit of a role's strategy.

    ``action_gap[r, q]`` is the best one-shot deviation value (any action,
    optimal erasure) minus the prescribed value; it is NaN for opponent states
    with zero mass. ``erasure_consistency[r, s]`` says whether the erasure
    rule erases exactly when keeping would lower the value.
    """

    states: tuple
    opponent_states: tuple
    values: np.ndarray
    action_values: np.ndarray
    action_gap: np.ndarray
    erasure_consistency: np.ndarray
    opponent_field: np.ndarray
    max_gap: float

    def certified(self, tol: float = CERTIFY_TOL) -> bool:
        return self.max_gap <= tol and bool(self.erasure_consistency.all())

    def to_csv_rows(self):
        return [(self.states[r], self.opponent_states[q], float(self.action_gap[r, q]))
                for r in range(len(self.states)) for q in range(len(self.opponent_states))]


def incentive_gap(automaton, profile: StrategyProfile, mu, monitoring, game, delta: float,
                  role: int = 0, tol: float = CERTIFY_TOL, opponent_states=None) -> IncentiveReport:
    own, opp = profile[role], profile[1 - role]
    mu_opp = validate_distribution(mu[1 - role])
    value = policy_value(automaton, profile, mu, monitoring, game, delta, role)
    v = value.values
    view = role_view(automaton, opp, monitoring, game, role)
    q = action_values(v, automaton, view, delta)
    gap = q.max(axis=2) - _prescribed_values(v, automaton, view, own, delta)
    gap = np.where(mu_opp[None, :] > 0, gap, np.nan)
    diff = v[automaton.step] - v[:, None]
    e = own.erasure_rule
    consistent = np.where(diff < -tol, e >= 1.0 - tol, np.where(diff > tol, e <= tol, True))
    field_ = np.einsum("q,rqb->rb", mu_opp, view.opp_actions)
    if opponent_states is None:
        opponent_states = tuple(str(k) for k in range(len(mu_opp)))
    return IncentiveReport(automaton.states, tuple(opponent_states), v, q, gap, consistent, field_,
                           float(np.nanmax(gap)))


def secure_defection_payoff(mu_opponent, opponent_strategy: RoleStrategy, game, role: int,
                            defect_action: int | str = "D", initial: int = 0) -> float:
    """Flow payoff of always defecting and erasing every signal (record stuck at the initial state)."""
    if isinstance(defect_action, str):
        defect_action = game.action_index(role, defect_action)
    mu_opponent = validate_distribution(mu_opponent)
    opp_vs_empty = opponent_strategy.action_rule[:, initial, :]
    u = game.own_view(role)[defect_action]
    return float(mu_opponent @ opp_vs_empty @ u)


def defect_and_erase(n_own, n_opp, n_actions, n_signals, defect_action=1) -> RoleStrategy:
    probs = np.zeros(n_actions)
    probs[defect_action] = 1.0
    return RoleStrategy.constant(n_own, n_opp, probs, n_signals, erase=1.0)

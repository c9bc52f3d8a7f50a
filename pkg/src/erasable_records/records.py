"""Record automata, per-period transition kernels and steady-state distributions.

A record is summarised by the state of a finite automaton driven by the
player's own kept signals. Erasing a signal leaves the state unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonConvergence
from .game import MonitoringStructure, StageGame

DIST_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RecordAutomaton:
    states: tuple
    signals: tuple
    step: np.ndarray
    initial: int = 0

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        signals = tuple(str(s) for s in self.signals)
        step = np.array(self.step, dtype=np.int64, copy=True)
        if step.shape != (len(states), len(signals)):
            raise DimensionMismatch(f"step table has shape {step.shape}, expected {(len(states), len(signals))}")
        if step.size and (step.min() < 0 or step.max() >= len(states)):
            raise DimensionMismatch("step table points outside the state set")
        if not 0 <= self.initial < len(states):
            raise DimensionMismatch("initial state out of range")
        step.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "step", step)

    def __eq__(self, other):
        if not isinstance(other, RecordAutomaton):
            return NotImplemented
        return (self.states, self.signals, self.initial) == (other.states, other.signals, other.initial) \
            and np.array_equal(self.step, other.step)

    def __hash__(self):
        return hash((self.states, self.signals, self.initial, self.step.tobytes()))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_signals(self) -> int:
        return len(self.signals)

    def next_state(self, state: str, signal: str) -> str:
        i, s = self.states.index(state), self.signals.index(signal)
        return self.states[self.step[i, s]]

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "initial": self.states[self.initial],
            "step": {
                st: {sig: self.states[self.step[i, k]] for k, sig in enumerate(self.signals)}
                for i, st in enumerate(self.states)
            },
        }

    @classmethod
    def from_json(cls, data: dict, signals=None) -> "RecordAutomaton":
        states = [str(s) for s in data["states"]]
        table = data["step"]
        if signals is None:
            signals = list(table[states[0]].keys())
        signals = [str(s) for s in signals]
        if set(table) != set(states):
            raise DimensionMismatch("step must list every state exactly once")
        step = np.empty((len(states), len(signals)), dtype=np.int64)
        for i, st in enumerate(states):
            row = table[st]
            if set(row) != set(signals):
                raise DimensionMismatch(f"state {st!r}: step must be total over signals {signals}")
            for k, sig in enumerate(signals):
                step[i, k] = states.index(str(row[sig]))
        return cls(tuple(states), tuple(signals), step, states.index(str(data["initial"])))


def junior_senior_automaton(signals=("C", "D")) -> RecordAutomaton:
    """Junior until the first kept C signal, senior forever after."""
    c = signals.index("C")
    step = np.zeros((2, len(signals)), dtype=np.int64)
    step[0, c] = 1
    step[1, :] = 1
    return RecordAutomaton(("Junior", "Senior"), tuple(signals), step, 0)


def single_state_automaton(signals) -> RecordAutomaton:
    return RecordAutomaton(("Empty",), tuple(signals), np.zeros((1, len(signals)), dtype=np.int64))


def length_automaton(signals, cap: int) -> RecordAutomaton:
    """State = number of kept signals, absorbing at ``cap``."""
    step = np.minimum(np.arange(cap + 1)[:, None] + 1, cap) * np.ones((1, len(signals)), dtype=np.int64)
    return RecordAutomaton(tuple(str(k) for k in range(cap + 1)), tuple(signals), step)


@dataclass(frozen=True, eq=False)
class RoleStrategy:
    """``action_rule[r, r_opp, a]`` and ``erasure_rule[r, s]`` (probability of erasing)."""

    action_rule: np.ndarray
    erasure_rule: np.ndarray

    def __post_init__(self):
        act = np.array(self.action_rule, dtype=float, copy=True)
        era = np.array(self.erasure_rule, dtype=float, copy=True)
        if act.ndim != 3 or era.ndim != 2 or act.shape[0] != era.shape[0]:
            raise DimensionMismatch("action_rule must be (own, opp, action) and erasure_rule (own, signal)")
        if np.any(act < -1e-15) or np.any(np.abs(act.sum(axis=-1) - 1.0) > 1e-12):
            raise ValueError("action distributions must be probability vectors")
        if np.any(era < 0) or np.any(era > 1):
            raise ValueError("erasure probabilities must lie in [0,1]")
        act = np.clip(act, 0.0, 1.0)
        act.setflags(write=False)
        era.setflags(write=False)
        object.__setattr__(self, "action_rule", act)
        object.__setattr__(self, "erasure_rule", era)

    @property
    def shape(self):
        return self.action_rule.shape

    @classmethod
    def constant(cls, n_own, n_opp, action_probs, n_signals, erase=0.0) -> "RoleStrategy":
        act = np.broadcast_to(np.asarray(action_probs, dtype=float), (n_own, n_opp, len(action_probs)))
        return cls(act, np.full((n_own, n_signals), float(erase)))


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    roles: tuple

    def __post_init__(self):
        roles = tuple(self.roles)
        if len(roles) != 2:
            raise DimensionMismatch("strategy profiles are defined for two roles")
        s0, s1 = roles
        if s0.shape[1] != s1.shape[0] or s1.shape[1] != s0.shape[0]:
            raise DimensionMismatch("action rules disagree on the record state spaces")
        object.__setattr__(self, "roles", roles)

    def __getitem__(self, role):
        return self.roles[role]

    def replace(self, role: int, strategy: RoleStrategy) -> "StrategyProfile":
        roles = list(self.roles)
        roles[role] = strategy
        return StrategyProfile(tuple(roles))

    @classmethod
    def symmetric(cls, strategy: RoleStrategy) -> "StrategyProfile":
        return cls((strategy, strategy))


def validate_distribution(mu, n_states=None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or (n_states is not None and mu.shape[0] != n_states):
        raise DimensionMismatch(f"distribution of length {mu.shape} does not match {n_states} states")
    if np.any(mu < -DIST_TOL) or abs(mu.sum() - 1.0) > DIST_TOL:
        raise ValueError("state distribution must be nonnegative and sum to 1")
    return mu


@dataclass(frozen=True, eq=False)
class RoleView:
    """Everything one role needs about its opponent to plan.

    ``flow[r, q, a]``: expected stage payoff of action ``a`` in own state ``r``
    facing opponent state ``q``. ``signal[r, q, a, s]``: probability of own
    signal ``s``. ``opp_actions[r, q, b]``: opponent's action distribution.
    """

    flow: np.ndarray
    signal: np.ndarray
    opp_actions: np.ndarray


def role_view(automaton, opponent_strategy: RoleStrategy, monitoring, game, role=0) -> RoleView:
    u = game.own_view(role)
    f = monitoring.own_view(role)
    if f.shape[-1] != automaton.n_signals:
        raise DimensionMismatch("automaton signals do not match the monitoring structure")
    oa = np.transpose(opponent_strategy.action_rule, (1, 0, 2))
    if oa.shape[0] != automaton.n_states or oa.shape[2] != u.shape[1]:
        raise DimensionMismatch("opponent strategy does not match own states or opponent actions")
    flow = np.einsum("rqb,ab->rqa", oa, u)
    signal = np.einsum("rqb,abs->rqas", oa, f)
    return RoleView(flow, signal, oa)


def build_kernel(automaton, own_strategy, opponent_distribution, opponent_strategy,
                 monitoring: MonitoringStructure, game: StageGame, role: int = 0) -> np.ndarray:
    """Per-period record transition matrix, conditional on survival."""
    n = automaton.n_states
    mu_opp = validate_distribution(opponent_distribution)
    if own_strategy.shape[0] != n or own_strategy.shape[1] != mu_opp.shape[0]:
        raise DimensionMismatch("own strategy does not match the state spaces")
    if own_strategy.erasure_rule.shape[1] != automaton.n_signals:
        raise DimensionMismatch("erasure rule does not match the signal set")
    view = role_view(automaton, opponent_strategy, monitoring, game, role)
    # probability of each own signal from own state r
    w = np.einsum("q,rqa,rqas->rs", mu_opp, own_strategy.action_rule, view.signal)
    e = own_strategy.erasure_rule
    kernel = np.zeros((n, n))
    rows = np.repeat(np.arange(n), automaton.n_signals)
    np.add.at(kernel, (rows, automaton.step.ravel()), (w * (1.0 - e)).ravel())
    kernel[np.arange(n), np.arange(n)] += (w * e).sum(axis=1)
    return kernel


def stationary_distribution(kernel, bar_delta: float, initial: int = 0, method: str = "direct",
                            tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Solve mu = (1 - bar_delta) e_initial + bar_delta * mu @ kernel."""
    kernel = np.asarray(kernel, dtype=float)
    n = kernel.shape[0]
    if kernel.shape != (n, n):
        raise DimensionMismatch("kernel must be square")
    if not 0.0 < bar_delta < 1.0:
        raise ValueError("bar_delta must lie in (0,1)")
    births = np.zeros(n)
    births[initial] = 1.0 - bar_delta
    if method == "direct":
        mu = np.linalg.solve(np.eye(n) - bar_delta * kernel.T, births)
    elif method == "iterate":
        mu = np.zeros(n)
        mu[initial] = 1.0
        for _ in range(max_iter):
            nxt = births + bar_delta * (mu @ kernel)
            res = np.max(np.abs(nxt - mu))
            mu = nxt
            if res <= tol:
                break
        else:
            raise NonConvergence(f"power iteration stopped at residual {res:.3e}", residual=res)
    else:
        raise ValueError(f"unknown method {method!r}")
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def stationary_residual(mu, kernel, bar_delta, initial=0) -> float:
    births = np.zeros(len(mu))
    births[initial] = 1.0 - bar_delta
    return float(np.max(np.abs(mu - births - bar_delta * (mu @ kernel))))


def _pair(x):
    return tuple(x) if isinstance(x, (tuple, list)) else (x, x)


def _is_symmetric(automata, profile, monitoring, game, bar_deltas) -> bool:
    a0, a1 = automata
    s0, s1 = profile.roles
    return (
        a0 == a1
        and bar_deltas[0] == bar_deltas[1]
        and np.array_equal(s0.action_rule, s1.action_rule)
        and np.array_equal(s0.erasure_rule, s1.erasure_rule)
        and np.array_equal(game.own_view(0), game.own_view(1))
        and np.array_equal(monitoring.own_view(0), monitoring.own_view(1))
    )


def self_consistent_distribution(automaton, profile: StrategyProfile, monitoring, game, bar_delta,
                                 damping: float = 0.5, tol: float = 1e-12, max_iter: int = 100_000, start=None):
    """Steady-state record distributions (one per role) consistent with ``profile``.

    ``automaton`` and ``bar_delta`` may be single values or per-role pairs.
    Returns a pair ``(mu_0, mu_1)``; in symmetric mode both are the same array.
    """
    automata, bar_deltas = _pair(automaton), _pair(bar_delta)
    symmetric = _is_symmetric(automata, profile, monitoring, game, bar_deltas)
    roles = (0,) if symmetric else (0, 1)
    # interior start: the all-newborn point can be an unstable fixed point
    # (nobody meets a promoter, so nobody is promoted)
    if start is None:
        mus = [np.full(a.n_states, 1.0 / a.n_states) for a in automata]
    else:
        mus = [validate_distribution(m, a.n_states) for m, a in zip(_pair(start), automata)]
    trace = []
    for it in range(max_iter):
        new = list(mus)
        for i in roles:
            j = i if symmetric else 1 - i
            kernel = build_kernel(automata[i], profile[i], mus[j], profile[j], monitoring, game, role=i)
            new[i] = stationary_distribution(kernel, bar_deltas[i], automata[i].initial)
        if symmetric:
            new[1] = new[0]
        res = max(float(np.max(np.abs(new[i] - mus[i]))) for i in roles)
        trace.append(res)
        mus = [(1.0 - damping) * new[i] + damping * mus[i] for i in range(2)]
        if res <= tol:
            mus = new
            break
    else:
        raise NonConvergence(f"self-consistent distribution stalled at residual {res:.3e}",
                             residual=res, trace=trace[-20:])
    if symmetric:
        return mus[0], mus[0]
    return mus[0], mus[1]


def average_action_distribution(mu, profile: StrategyProfile, role: int) -> np.ndarray:
    mu_own, mu_opp = mu[role], mu[1 - role]
    return np.einsum("r,q,rqa->a", mu_own, mu_opp, profile[role].action_rule)


def average_payoff(mu, profile: StrategyProfile, game: StageGame, role: int) -> float:
    mu_own, mu_opp = mu[role], mu[1 - role]
    own = profile[role].action_rule
    opp = np.transpose(profile[1 - role].action_rule, (1, 0, 2))
    return float(np.einsum("r,q,rqa,rqb,ab->", mu_own, mu_opp, own, opp, game.own_view(role)))

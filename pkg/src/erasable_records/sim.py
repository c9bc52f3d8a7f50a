"""Finite-population Monte Carlo of the two-population matching model.

Each period: uniform one-to-one matching between the populations, actions
from the action rules, own signals from the monitoring tables, erasure draws,
then independent deaths (newborns restart at the initial record).

Random numbers come from Philox streams keyed by the seed with counter
``(period, purpose)``; agent ``k`` uses the ``k``-th draw of the stream, so a
run is a pure function of its configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, StateSpaceMismatch

MATCH, ACT, SIGNAL, ERASE, DEATH = range(5)


@dataclass(frozen=True, eq=False)
class SimConfig:
    agents: int
    periods: int
    burn_in: int
    seed: int
    bar_delta: object
    profile: object
    automaton: object
    monitoring: object
    game: object
    cooperate_action: int = 0

    def __post_init__(self):
        if self.agents < 2:
            raise ConfigInvalid("agents per population must be at least 2")
        if not 0 <= self.burn_in < self.periods:
            raise ConfigInvalid("burn_in must lie in [0, periods)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigInvalid("seed must be an unsigned 64-bit integer")
        for b in self.bar_deltas:
            if not 0.0 < b < 1.0:
                raise ConfigInvalid("bar_delta must lie in (0,1)")

    @property
    def bar_deltas(self):
        b = self.bar_delta
        return tuple(b) if isinstance(b, (tuple, list)) else (b, b)

    @property
    def automata(self):
        a = self.automaton
        return tuple(a) if isinstance(a, (tuple, list)) else (a, a)


@dataclass(eq=False)
class SimResult:
    distribution: tuple
    cooperation: tuple
    mean_payoff: tuple
    counts: np.ndarray  # [period, role, state], start-of-period
    coop_trace: np.ndarray  # [period, role]
    births: tuple
    deaths: tuple
    agents: int
    states: tuple = field(default_factory=tuple)

    def trace_rows(self):
        rows = []
        T, n_roles, _ = self.counts.shape
        for t in range(T):
            for i in range(n_roles):
                for k, name in enumerate(self.states[i]):
                    rows.append((t, i, name, int(self.counts[t, i, k]), float(self.coop_trace[t, i])))
        return rows

    def summary(self) -> dict:
        return {
            "agents": self.agents,
            "distribution": [dict(zip(s, map(float, d))) for s, d in zip(self.states, self.distribution)],
            "cooperation": list(map(float, self.cooperation)),
            "mean_payoff": list(map(float, self.mean_payoff)),
            "births": list(self.births),
            "deaths": list(self.deaths),
        }


TRACE_COLUMNS = ("period", "role", "state", "count", "coop_freq")


def _stream(seed, period, purpose):
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, period, purpose]))


def _uniform(seed, period, purpose, n):
    # float32 uniforms: 24-bit resolution is ample for the probabilities involved
    return _stream(seed, period, purpose).random(n, dtype=np.float32)


class _Table:
    """Per-cell outcome distribution; degenerate tables skip the random draw."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        flat = probs.reshape(-1, probs.shape[-1])
        self.deterministic = bool(np.all((flat == 0.0) | (flat == 1.0)))
        self.outcome = flat.argmax(axis=1).astype(np.intp)
        cum = np.cumsum(flat, axis=1)
        self.cum = [np.ascontiguousarray(cum[:, k]) for k in range(cum.shape[1] - 1)]

    def draw(self, index, uniforms):
        if self.deterministic:
            return self.outcome[index]
        u = uniforms()
        out = np.zeros(index.shape[0], dtype=np.intp)
        for table in self.cum:
            out += u >= table[index]
        return out


def run(config: SimConfig) -> SimResult:
    N, T = config.agents, config.periods
    game, mon, prof = config.game, config.monitoring, config.profile
    automata = config.automata
    n_states = [a.n_states for a in automata]
    n_act = [game.action_count(i) for i in (0, 1)]
    n_sig = [a.n_signals for a in automata]
    act_tables = [_Table(prof[i].action_rule) for i in (0, 1)]
    sig_tables = [_Table(mon.own_view(i)) for i in (0, 1)]
    payoff = [game.own_view(i).ravel() for i in (0, 1)]
    erase = [_Table(np.stack([1.0 - prof[i].erasure_rule, prof[i].erasure_rule], axis=-1)) for i in (0, 1)]
    steps = [a.step.ravel().astype(np.intp) for a in automata]
    die = [1.0 - b for b in config.bar_deltas]
    coop_action = config.cooperate_action

    states = [np.full(N, a.initial, dtype=np.intp) for a in automata]
    counts = np.zeros((T, 2, max(n_states)), dtype=np.int64)
    coop_trace = np.zeros((T, 2))
    pay_total = np.zeros(2)
    coop_total = np.zeros(2)
    births = [0, 0]
    for t in range(T):
        for i in (0, 1):
            counts[t, i, : n_states[i]] = np.bincount(states[i], minlength=n_states[i])
        # role-1 agents are relabelled by the matching permutation, so slot j
        # holds the partner of role-0 agent j; identities are exchangeable
        states[1] = states[1][_stream(config.seed, t, MATCH).permutation(N)]
        own = states
        states = [None, None]
        def uniforms(purpose, i):
            return lambda: _uniform(config.seed, t, purpose * 2 + i, N)

        acts = [act_tables[i].draw(own[i] * n_states[1 - i] + own[1 - i], uniforms(ACT, i)) for i in (0, 1)]
        for i in (0, 1):
            pair = acts[i] * n_act[1 - i] + acts[1 - i]
            sig = sig_tables[i].draw(pair, uniforms(SIGNAL, i))
            cell = own[i] * n_sig[i] + sig
            erased = erase[i].draw(cell, uniforms(ERASE, i)).astype(bool)
            new = np.where(erased, own[i], steps[i][cell])
            coop = np.count_nonzero(acts[i] == coop_action) / N
            coop_trace[t, i] = coop
            if t >= config.burn_in:
                coop_total[i] += coop
                pay_total[i] += float(payoff[i][pair].mean())
            dead = _uniform(config.seed, t, DEATH * 2 + i, N) < die[i]
            new[dead] = automata[i].initial
            births[i] += int(np.count_nonzero(dead))
            states[i] = new
    kept = T - config.burn_in
    dist = tuple(counts[config.burn_in:, i, : n_states[i]].sum(axis=0) / (kept * N) for i in (0, 1))
    return SimResult(
        distribution=dist,
        cooperation=tuple(coop_total / kept),
        mean_payoff=tuple(pay_total / kept),
        counts=counts,
        coop_trace=coop_trace,
        births=tuple(births),
        deaths=tuple(births),
        agents=N,
        states=tuple(a.states for a in automata),
    )


def compare(result: SimResult, analytic_mu, tolerance: float) -> dict:
    """Per-state deviations of the empirical distribution from ``analytic_mu``."""
    if not isinstance(analytic_mu, (tuple, list)):
        analytic_mu = (analytic_mu, analytic_mu)
    roles = []
    worst = 0.0
    for i, (emp, ana) in enumerate(zip(result.distribution, analytic_mu)):
        ana = np.asarray(ana, dtype=float)
        if ana.shape != emp.shape:
            raise StateSpaceMismatch(f"role {i}: empirical has {emp.shape[0]} states, analytic {ana.shape[0]}")
        dev = emp - ana
        se = np.sqrt(ana * (1.0 - ana) / result.agents)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, dev / se, np.where(dev == 0, 0.0, np.inf))
        worst = max(worst, float(np.max(np.abs(dev))))
        roles.append({"role": i, "deviation": dev.tolist(), "z": z.tolist()})
    return {"max_deviation": worst, "tolerance": tolerance, "passed": worst <= tolerance, "roles": roles}

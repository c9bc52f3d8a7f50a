"""Payoff-shock perturbations of record-based equilibria.

Each period a player's flow payoff from action ``a`` is ``u(a, b) + eps * z(a)``
with ``z`` drawn independently per action, player and period. Continuation
values are shock-free expectations. Cooperation is chosen iff

    (1 - delta) * eps * (z(C) - z(D)) >= Q(D) - Q(C),

where ``Q`` are the shock-free one-shot values with optimal erasure. A
perturbed equilibrium is a joint fixed point of choice probabilities and the
record distribution they induce.

Only two-action, role-symmetric games are handled here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NonConvergence
from .game import make_prisoners_dilemma, perfect_monitoring
from .junior_senior import candidate, junior_senior_strategy
from .records import (
    RoleStrategy,
    StrategyProfile,
    build_kernel,
    junior_senior_automaton,
    role_view,
    stationary_distribution,
)
from .values import CERTIFY_TOL, action_values, incentive_gap

FIXED_POINT_TOL = 1e-10
DEFAULT_STARTS = (0.1, 0.5, 0.9)
COOPERATE, DEFECT = 0, 1

REPORT_HEADER = (
    "# evidence, not proof: one shock family (uniform on [-1,1] unless stated) and one solver path;\n"
    "# purifiability proper quantifies over every atomless shock distribution and every converging sequence\n"
)


@dataclass(frozen=True, eq=False)
class ShockSpec:
    """Scale and family of the per-action payoff shock.

    ``family="uniform"`` draws ``z(a)`` uniformly on [-1, 1]; the difference
    ``z(C) - z(D)`` is then triangular on [-2, 2]. ``family="quantile"`` takes
    a bounded quantile function and discretises it on ``grid`` midpoints; the
    difference distribution is the resulting piecewise-linear interpolation.
    """

    epsilon: float
    family: str = "uniform"
    quantile: object = None
    grid: int = 200

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("shock scale epsilon must be positive")
        if self.family not in ("uniform", "quantile"):
            raise ValueError(f"unknown shock family {self.family!r}")
        if self.family == "quantile":
            if self.quantile is None:
                raise ValueError("quantile family needs a quantile function")
            z = np.asarray(self.quantile((np.arange(self.grid) + 0.5) / self.grid), dtype=float)
            if not np.all(np.isfinite(z)):
                raise ValueError("shock support must be bounded")
            diff = np.sort((z[:, None] - z[None, :]).ravel())
            object.__setattr__(self, "_diff", diff)
            object.__setattr__(self, "_mean", float(z.mean()))
            # tail sums for E[(Z - t)+] on the sorted grid
            object.__setattr__(self, "_tail", np.concatenate([np.cumsum(diff[::-1])[::-1], [0.0]]))

    def with_epsilon(self, epsilon: float) -> "ShockSpec":
        return ShockSpec(epsilon, self.family, self.quantile, self.grid)

    @property
    def mean(self) -> float:
        return 0.0 if self.family == "uniform" else self._mean

    def survival(self, t):
        """P(z(C) - z(D) >= t)."""
        t = np.asarray(t, dtype=float)
        if self.family == "uniform":
            s = np.where(t <= 0.0, 1.0 - (np.clip(t, -2.0, 0.0) + 2.0) ** 2 / 8.0,
                         (2.0 - np.clip(t, 0.0, 2.0)) ** 2 / 8.0)
            return s
        d = self._diff
        n = d.size
        cdf = np.interp(t, d, (np.arange(n) + 0.5) / n, left=0.0, right=1.0)
        return 1.0 - cdf

    def excess(self, t):
        """E[(z(C) - z(D) - t)+]."""
        t = np.asarray(t, dtype=float)
        if self.family == "uniform":
            lo = np.clip(t, -2.0, 0.0)
            hi = np.clip(t, 0.0, 2.0)
            return np.where(t <= -2.0, -t, np.where(t <= 0.0, -lo + (lo + 2.0) ** 3 / 24.0,
                                                    (2.0 - hi) ** 3 / 24.0))
        d, tail = self._diff, self._tail
        k = np.searchsorted(d, t, side="left")
        return (tail[k] - (d.size - k) * t) / d.size


@dataclass(eq=False)
class PerturbedEquilibrium:
    choice_prob: np.ndarray  # [own state, opponent state, action]
    mu: np.ndarray
    values: np.ndarray
    epsilon: float
    residual: float
    converged: bool
    iterations: int
    start: float | None = None
    trace: list = field(default_factory=list)

    @property
    def cooperation(self) -> np.ndarray:
        return self.choice_prob[:, :, COOPERATE]


def _strategy(coop, erase) -> RoleStrategy:
    return RoleStrategy(np.stack([coop, 1.0 - coop], axis=-1), erase)


def _erasure(values, automaton):
    return (values[automaton.step] < values[:, None]).astype(float)


def soft_values(automaton, opponent: RoleStrategy, mu_opp, monitoring, game, delta, shock: ShockSpec,
                tol: float = 1e-13, max_iter: int = 100_000, start=None):
    """Shock-averaged values with optimal actions and erasure; returns (values, Q, threshold)."""
    view = role_view(automaton, opponent, monitoring, game)
    scale = (1.0 - delta) * shock.epsilon
    v = np.zeros(automaton.n_states) if start is None else np.array(start, dtype=float)
    for it in range(max_iter):
        q = action_values(v, automaton, view, delta)
        t = (q[:, :, DEFECT] - q[:, :, COOPERATE]) / scale
        cell = q[:, :, DEFECT] + scale * (shock.mean + shock.excess(t))
        nxt = cell @ mu_opp
        res = float(np.max(np.abs(nxt - v)))
        v = nxt
        if res <= tol:
            q = action_values(v, automaton, view, delta)
            return v, q, (q[:, :, DEFECT] - q[:, :, COOPERATE]) / scale
    raise NonConvergence(f"soft Bellman iteration stopped at residual {res:.3e}", residual=res)


class _Problem:
    """Fixed-point map over x = (C-probabilities per cell, record distribution)."""

    def __init__(self, automaton, monitoring, game, delta, bar_delta, shock):
        self.automaton, self.monitoring, self.game = automaton, monitoring, game
        self.delta, self.bar_delta, self.shock = delta, bar_delta, shock
        self.n = automaton.n_states
        self.values = None

    def split(self, x):
        n = self.n
        coop = np.clip(x[: n * n].reshape(n, n), 0.0, 1.0)
        mu = np.clip(x[n * n:], 0.0, None)
        return coop, mu / mu.sum()

    def __call__(self, x):
        coop, mu = self.split(x)
        a = self.automaton
        opp = _strategy(coop, np.zeros((self.n, a.n_signals)))
        v, q, t = soft_values(a, opp, mu, self.monitoring, self.game, self.delta, self.shock, start=self.values)
        self.values = v
        new_coop = self.shock.survival(t)
        own = _strategy(new_coop, _erasure(v, a))
        kernel = build_kernel(a, own, mu, _strategy(coop, own.erasure_rule), self.monitoring, self.game)
        new_mu = stationary_distribution(kernel, self.bar_delta, a.initial)
        return np.concatenate([new_coop.ravel(), new_mu])


def perturbed_fixed_point(g, l, hat_delta, bar_delta, shock: ShockSpec, automaton=None, start_q: float = 0.5,
                          damping: float = 0.5, tol: float = FIXED_POINT_TOL, max_iter: int = 5000,
                          warmup: int = 100, polish: bool = True) -> PerturbedEquilibrium:
    """Perturbed equilibrium reached from a junior/senior-shaped start with C-probability ``start_q``."""
    game, _ = make_prisoners_dilemma(g, l)
    mon = perfect_monitoring(game)
    automaton = junior_senior_automaton() if automaton is None else automaton
    delta = hat_delta * bar_delta
    prob = _Problem(automaton, mon, game, delta, bar_delta, shock)
    n = automaton.n_states
    if automaton == junior_senior_automaton():
        coop0 = junior_senior_strategy(start_q).action_rule[:, :, COOPERATE]
    else:
        coop0 = np.full((n, n), start_q)
    mu0 = np.zeros(n)
    mu0[automaton.initial] = 1.0
    x = np.concatenate([coop0.ravel(), mu0])
    trace = []
    res = math.inf
    it = 0

    def damped(x, iterations):
        nonlocal it, res
        for _ in range(iterations):
            it += 1
            gx = prob(x)
            res = float(np.max(np.abs(gx - x)))
            trace.append(res)
            if res <= tol:
                return gx
            x = (1.0 - damping) * gx + damping * x
        return x

    # a short damped phase locates the basin; the hybrid Newton polish finishes
    x = damped(x, warmup if polish else max_iter)
    if res > tol and polish:
        sol = optimize.root(lambda y: prob(y) - y, x, method="hybr", options={"xtol": 1e-14})
        y = prob(sol.x)
        r2 = float(np.max(np.abs(y - sol.x)))
        trace.append(r2)
        if r2 <= tol:
            x, res = y, r2
        else:
            x = damped(x, max_iter - warmup)
    if res > tol:
        raise NonConvergence(f"perturbed fixed point stalled at residual {res:.3e}", residual=res,
                             trace=trace[-20:])
    coop, mu = prob.split(x)
    res = float(np.max(np.abs(prob(x) - x)))
    return PerturbedEquilibrium(np.stack([coop, 1.0 - coop], axis=-1), mu, prob.values.copy(),
                                shock.epsilon, res, res <= tol, it, start_q, trace)


def multi_start(g, l, hat_delta, bar_delta, shock: ShockSpec, starts=DEFAULT_STARTS, automaton=None,
                distinct_tol: float = 1e-6) -> dict:
    """Fixed points from several starts; failures are recorded, not raised."""
    found, failures = [], []
    for q in starts:
        try:
            found.append(perturbed_fixed_point(g, l, hat_delta, bar_delta, shock, automaton, q))
        except NonConvergence as exc:
            failures.append({"start": q, "residual": exc.residual})
    distinct = []
    for e in found:
        if not any(np.max(np.abs(e.choice_prob - d.choice_prob)) < distinct_tol for d in distinct):
            distinct.append(e)
    return {"equilibria": found, "distinct": distinct, "failures": failures}


@dataclass(eq=False)
class PurificationReport:
    epsilons: list
    distances: list
    equilibria: list
    reference: np.ndarray
    slope: float | None
    slope_defined: bool
    decreasing: bool
    passed: bool
    lipschitz: list
    header: str = REPORT_HEADER

    def to_csv_rows(self):
        rows = []
        for eps, d, e in zip(self.epsilons, self.distances, self.equilibria):
            n = e.cooperation.shape[0]
            for r in range(n):
                for q in range(n):
                    rows.append((eps, f"{r}-{q}", float(e.cooperation[r, q]), d, int(e.converged)))
        return rows

    def summary(self) -> dict:
        return {"epsilons": list(self.epsilons), "distances": list(self.distances), "slope": self.slope,
                "slope_defined": self.slope_defined, "decreasing": self.decreasing,
                "lipschitz": self.lipschitz, "passed": self.passed,
                "note": "evidence, not proof; one shock family and one solver path"}


PURIFY_COLUMNS = ("epsilon", "cell", "choice_prob", "distance", "converged")


def purification_distance(perturbed: PerturbedEquilibrium, reference_coop, reference_mu) -> float:
    return float(np.max(np.abs(perturbed.cooperation - reference_coop))
                 + np.max(np.abs(perturbed.mu - reference_mu)))


def purification_check(eqm, epsilons, shock: ShockSpec | None = None, start_q: float | None = None,
                       ratio: float = 10.0) -> PurificationReport:
    """Track perturbed equilibria along a decreasing list of shock scales.

    PASS iff the distance to the unperturbed profile decreases along the list
    and the last distance is at most ``ratio`` times the smallest scale.
    """
    epsilons = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    shock = ShockSpec(epsilons[0]) if shock is None else shock
    ref_coop = junior_senior_strategy(eqm.q).action_rule[:, :, COOPERATE]
    ref_mu = np.array([eqm.mu0, eqm.mu1])
    start = eqm.q if start_q is None else start_q
    found, dist = [], []
    for eps in epsilons:
        e = perturbed_fixed_point(eqm.g, eqm.l, eqm.hat_delta, eqm.bar_delta, shock.with_epsilon(eps),
                                  start_q=start)
        found.append(e)
        dist.append(purification_distance(e, ref_coop, ref_mu))
    slope_defined = len(epsilons) >= 2 and all(d > 0 for d in dist)
    slope = float(np.polyfit(np.log(epsilons), np.log(dist), 1)[0]) if slope_defined else None
    decreasing = all(b < a for a, b in zip(dist, dist[1:]))
    lipschitz = [float(np.max(np.abs(a.cooperation - b.cooperation)) / (ea - eb))
                 for a, b, ea, eb in zip(found, found[1:], epsilons, epsilons[1:])]
    passed = decreasing and dist[-1] <= ratio * epsilons[-1]
    return PurificationReport(epsilons, dist, found, ref_coop, slope, slope_defined, decreasing, passed, lipschitz)


def supermodular_certificate(g, l, hat_delta, bar_delta, qs, certify_tol: float = CERTIFY_TOL) -> list:
    """For each q, the defect-and-erase gain q*mu1*(l - g) and the incentive audit of the candidate."""
    rows = []
    for q in qs:
        c = candidate(g, l, hat_delta, bar_delta, q)
        game, _ = make_prisoners_dilemma(g, l)
        mon = perfect_monitoring(game)
        prof = StrategyProfile.symmetric(junior_senior_strategy(q))
        mu = np.array([c.mu0, c.mu1])
        audit = incentive_gap(junior_senior_automaton(), prof, (mu, mu), mon, game, c.delta)
        closed = q * c.mu1 * (g - l)
        rows.append({
            "q": q, "bar_delta": bar_delta, "mu1": c.mu1, "certificate": closed,
            "deviation_gain": c.mu0 * q * (1.0 + g) - c.V0,
            "certificate_nonpositive": closed <= 0.0,
            "max_gap": audit.max_gap, "certified": audit.certified(certify_tol),
        })
    return rows

"""Junior/senior equilibrium of the submodular prisoner's dilemma.

Juniors have no kept C signal, seniors have at least one. Seniors always
defect; juniors cooperate with seniors and cooperate with probability ``q``
with other juniors, which makes juniors indifferent in junior-junior matches.
Signals reveal actions perfectly and nobody erases.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NotSubmodular, VerificationFailure
from .game import PopulationParams, PrisonersDilemmaParams, make_prisoners_dilemma, perfect_monitoring
from .records import RoleStrategy, StrategyProfile, average_action_distribution, junior_senior_automaton
from .values import defect_and_erase, incentive_gap, policy_value, secure_defection_payoff

RESIDUAL_TOL = 1e-9
BISECT_TOL = 1e-12
JUNIOR, SENIOR = 0, 1


def mu0_of_q(q: float, bar_delta: float) -> float:
    """Steady-state junior mass: smaller root of bar_delta (1-q) m^2 - m + (1 - bar_delta) = 0."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0,1], got {q}")
    if not 0.0 < bar_delta < 1.0:
        raise ValueError(f"bar_delta must lie in (0,1), got {bar_delta}")
    a = bar_delta * (1.0 - q)
    c = 1.0 - bar_delta
    disc = 1.0 - 4.0 * a * c
    assert disc > -1e-14, disc
    # rationalised form of (1 - sqrt(disc)) / (2a); exact at q = 1 where a = 0
    return min(2.0 * c / (1.0 + math.sqrt(max(disc, 0.0))), 1.0)


def _kappa(g, l):
    return l / (1.0 + g)


def indifference_lhs(q, bar_delta):
    return (1.0 - q) * mu0_of_q(q, bar_delta)


def indifference_rhs(q, g, l, delta, bar_delta):
    return (1.0 - delta) / delta * _kappa(g, l) + q * (g - l) / (1.0 + g) * (1.0 / delta - mu0_of_q(q, bar_delta))


def existence_check(g, l, hat_delta, bar_delta) -> dict:
    """Both sides of the q = 0 comparison that decides existence."""
    delta = hat_delta * bar_delta
    survival_ratio = (1.0 - bar_delta) / bar_delta
    rhs = (1.0 - delta) / delta * _kappa(g, l)
    lhs_q0 = mu0_of_q(0.0, bar_delta)
    return {
        "survival_ratio": survival_ratio,
        "impatience_bound": rhs,
        "junior_mass_at_q0": lhs_q0,
        "literal_holds": survival_ratio >= rhs,
        "holds": lhs_q0 >= rhs,
    }


def upper_endpoint(g, l, hat_delta):
    """Largest bar_delta satisfying (1-bar_delta)/bar_delta >= (1-delta)/delta * l/(1+g)."""
    k = _kappa(g, l)
    hi = (hat_delta - k) / (hat_delta * (1.0 - k))
    return hi if hi > 0 else None


@dataclass(frozen=True)
class JuniorSeniorEquilibrium:
    g: float
    l: float
    hat_delta: float
    bar_delta: float
    q: float
    mu0: float
    mu1: float
    V0: float
    V1: float
    degenerate: bool = False
    residuals: dict = field(default_factory=dict, compare=False)
    margins: dict = field(default_factory=dict, compare=False)

    @property
    def delta(self) -> float:
        return self.hat_delta * self.bar_delta

    @property
    def cooperative(self) -> bool:
        return self.q > 0 and not self.degenerate

    def to_json(self) -> dict:
        out = asdict(self)
        out["delta"] = self.delta
        out["average_cooperation"] = average_cooperation(self)
        return out


def _junior_value(q, mu0, V1, g, l, delta):
    """Junior's value computed through playing C in every match."""
    mu1 = 1.0 - mu0
    u_c_vs_junior = q - (1.0 - q) * l
    return mu0 * ((1.0 - delta) * u_c_vs_junior + delta * V1) + mu1 * ((1.0 - delta) * (-l) + delta * V1)


def _analytic_margins(q, mu0, V0, V1, g, l, delta):
    mu1 = 1.0 - mu0
    return {
        "junior_vs_junior_indifference": ((1 - delta) * (q - (1 - q) * l) + delta * V1)
        - ((1 - delta) * q * (1 + g) + delta * V0),
        "junior_vs_senior": ((1 - delta) * (-l) + delta * V1) - delta * V0,
        "senior_vs_junior": (1 - delta) * g,
        "senior_vs_senior": (1 - delta) * l,
        "defect_and_erase": V0 - mu0 * q * (1 + g),
        "junior_vs_senior_closed_form": (1 - delta) * q * (g - l),
        "defect_and_erase_closed_form": q * mu1 * (g - l),
    }


def _residuals(q, mu0, V0, V1, g, l, delta, bar_delta):
    mu1 = 1.0 - mu0
    return {
        "value_gap": (V1 - V0) - (1 - delta) / delta * (q * g + (1 - q) * l),
        "junior_value": V0 - q * (mu0 + g - mu1 * l),
        "indifference": indifference_lhs(q, bar_delta) - indifference_rhs(q, g, l, delta, bar_delta),
        "steady_state": mu0 - (1 - bar_delta) - bar_delta * mu0 * mu0 * (1 - q),
        "senior_value": V1 - mu0 * (1 + g),
        "mass": mu0 + mu1 - 1.0,
    }


def candidate(g, l, hat_delta, bar_delta, q) -> JuniorSeniorEquilibrium:
    """Junior/senior profile at an arbitrary ``q`` (not necessarily an equilibrium)."""
    PrisonersDilemmaParams(g, l)
    PopulationParams(hat_delta, bar_delta)
    delta = hat_delta * bar_delta
    mu0 = mu0_of_q(q, bar_delta)
    V1 = mu0 * (1.0 + g)
    V0 = _junior_value(q, mu0, V1, g, l, delta)
    return JuniorSeniorEquilibrium(
        g, l, hat_delta, bar_delta, q, mu0, 1.0 - mu0, V0, V1, q == 0.0,
        _residuals(q, mu0, V0, V1, g, l, delta, bar_delta),
        _analytic_margins(q, mu0, V0, V1, g, l, delta),
    )


def bisect(func, lo, hi, tol=BISECT_TOL, max_iter=200):
    """Root of a function with func(lo) >= 0 >= func(hi)."""
    f_lo = func(lo)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve(g, l, hat_delta, bar_delta, tol=BISECT_TOL):
    """Solve the junior/senior system, or return ``None`` when no solution exists."""
    params = PrisonersDilemmaParams(g, l)
    if g <= l:
        raise NotSubmodular(f"junior/senior construction needs g > l (got g={params.g}, l={params.l})")
    pop = PopulationParams(hat_delta, bar_delta)
    delta = pop.delta

    def gap(q):
        return indifference_lhs(q, bar_delta) - indifference_rhs(q, g, l, delta, bar_delta)

    g0 = gap(0.0)
    if g0 < 0:
        return None
    q = 0.0 if g0 == 0.0 else bisect(gap, 0.0, 1.0, tol)
    eqm = candidate(g, l, hat_delta, bar_delta, q)
    if not _valid(eqm):
        return None
    return eqm


def _valid(eqm, tol=RESIDUAL_TOL) -> bool:
    if any(abs(v) > tol for v in eqm.residuals.values()):
        return False
    m = eqm.margins
    if abs(m["junior_vs_junior_indifference"]) > tol:
        return False
    if min(m["junior_vs_senior"], m["defect_and_erase"], m["senior_vs_junior"], m["senior_vs_senior"]) < -tol:
        return False
    return -tol <= eqm.V0 <= eqm.V1 + tol and eqm.V1 <= 1 + eqm.g + tol


def junior_senior_strategy(q: float) -> RoleStrategy:
    act = np.zeros((2, 2, 2))
    act[JUNIOR, JUNIOR] = (q, 1.0 - q)
    act[JUNIOR, SENIOR] = (1.0, 0.0)
    act[SENIOR, :] = (0.0, 1.0)
    return RoleStrategy(act, np.zeros((2, 2)))


def environment(eqm: JuniorSeniorEquilibrium) -> dict:
    """Game, monitoring, automaton, profile and masses for the record/value engines."""
    game, _ = make_prisoners_dilemma(eqm.g, eqm.l)
    mu = np.array([eqm.mu0, eqm.mu1])
    return {
        "game": game,
        "monitoring": perfect_monitoring(game),
        "automaton": junior_senior_automaton(),
        "profile": StrategyProfile.symmetric(junior_senior_strategy(eqm.q)),
        "mu": (mu, mu),
        "delta": eqm.delta,
        "bar_delta": eqm.bar_delta,
    }


def average_cooperation(eqm: JuniorSeniorEquilibrium) -> float:
    return eqm.mu0 * (eqm.mu0 * eqm.q + eqm.mu1)


def verify(eqm: JuniorSeniorEquilibrium, tol: float = RESIDUAL_TOL, dp_tol: float = 1e-8,
           dynamic_programming: bool = True) -> dict:
    """Recompute every margin; raise :class:`VerificationFailure` if one is violated."""
    g, l, q, delta = eqm.g, eqm.l, eqm.q, eqm.delta
    res = _residuals(q, eqm.mu0, eqm.V0, eqm.V1, g, l, delta, eqm.bar_delta)
    m = _analytic_margins(q, eqm.mu0, eqm.V0, eqm.V1, g, l, delta)
    report = {"residuals": res, "margins": m}
    bad = {}
    for k, v in res.items():
        if abs(v) > tol:
            bad[f"residual:{k}"] = v
    if abs(m["junior_vs_junior_indifference"]) > tol:
        bad["a:junior_vs_junior_indifference"] = m["junior_vs_junior_indifference"]
    if abs(m["junior_vs_senior"] - m["junior_vs_senior_closed_form"]) > tol or m["junior_vs_senior"] < -tol:
        bad["b:junior_vs_senior"] = m["junior_vs_senior"]
    if min(m["senior_vs_junior"], m["senior_vs_senior"]) <= 0:
        bad["c:senior"] = min(m["senior_vs_junior"], m["senior_vs_senior"])
    if abs(m["defect_and_erase"] - m["defect_and_erase_closed_form"]) > tol or m["defect_and_erase"] < -tol:
        bad["d:defect_and_erase"] = m["defect_and_erase"]

    if dynamic_programming:
        dp = _dynamic_programming_margins(eqm)
        report["dynamic_programming"] = dp
        checks = {
            "dp:V0": dp["V0"] - eqm.V0,
            "dp:V1": dp["V1"] - eqm.V1,
            "dp:b": dp["junior_vs_senior"] - m["junior_vs_senior"],
            "dp:c_junior": dp["senior_vs_junior"] - m["senior_vs_junior"],
            "dp:c_senior": dp["senior_vs_senior"] - m["senior_vs_senior"],
            "dp:d": dp["defect_and_erase"] - m["defect_and_erase"],
            "dp:indifference": dp["junior_vs_junior_indifference"],
        }
        for k, v in checks.items():
            if abs(v) > dp_tol:
                bad[k] = v
        if dp["max_gap"] > dp_tol:
            bad["dp:max_gap"] = dp["max_gap"]
    if bad:
        raise VerificationFailure("junior/senior verification failed: " + ", ".join(sorted(bad)), bad)
    return report


def _dynamic_programming_margins(eqm) -> dict:
    env = environment(eqm)
    game, mon, aut, prof, mu, delta = (env[k] for k in ("game", "monitoring", "automaton", "profile", "mu", "delta"))
    report = incentive_gap(aut, prof, mu, mon, game, delta)
    qv = report.action_values
    C, D = 0, 1
    dev = prof.replace(0, defect_and_erase(2, 2, 2, 2))
    secure_dp = policy_value(aut, dev, mu, mon, game, delta).values[JUNIOR]
    return {
        "V0": float(report.values[JUNIOR]),
        "V1": float(report.values[SENIOR]),
        "max_gap": report.max_gap,
        "erasure_consistent": bool(report.erasure_consistency.all()),
        "junior_vs_junior_indifference": float(qv[JUNIOR, JUNIOR, C] - qv[JUNIOR, JUNIOR, D]),
        "junior_vs_senior": float(qv[JUNIOR, SENIOR, C] - qv[JUNIOR, SENIOR, D]),
        "senior_vs_junior": float(qv[SENIOR, JUNIOR, D] - qv[SENIOR, JUNIOR, C]),
        "senior_vs_senior": float(qv[SENIOR, SENIOR, D] - qv[SENIOR, SENIOR, C]),
        "defect_and_erase": float(report.values[JUNIOR] - secure_dp),
        "secure_payoff": secure_defection_payoff(mu[1], prof[1], game, 0),
        "average_cooperation": float(average_action_distribution(mu, prof, 0)[C]),
    }


def feasibility_interval(g, l, hat_delta, grid_resolution=1e-4):
    """Longest contiguous bar_delta range on the grid where a cooperative solution exists."""
    if grid_resolution < 1e-4:
        raise ValueError("grid_resolution must be at least 1e-4")
    rows = scan(g, l, hat_delta, bar_delta_grid(grid_resolution))
    best, run = None, None
    for row in rows:
        ok = row["feasible"] and row["q"] > 0 and row["margin_b"] > 0 and row["margin_d"] > 0
        if ok:
            run = (run[0], row["bar_delta"]) if run else (row["bar_delta"], row["bar_delta"])
            if best is None or run[1] - run[0] > best[1] - best[0]:
                best = run
        else:
            run = None
    return best


def bar_delta_grid(resolution):
    n = int(round(1.0 / resolution))
    return [k / n for k in range(1, n)]


SCAN_COLUMNS = ("g", "l", "hat_delta", "bar_delta", "feasible", "q", "mu0", "V0", "V1",
                "avg_coop", "margin_b", "margin_d")


def scan_row(g, l, hat_delta, bar_delta) -> dict:
    nan = float("nan")
    row = dict(g=g, l=l, hat_delta=hat_delta, bar_delta=bar_delta, feasible=False, q=nan, mu0=nan,
               V0=nan, V1=nan, avg_coop=0.0, margin_b=nan, margin_d=nan)
    if g <= l:
        return row
    eqm = solve(g, l, hat_delta, bar_delta)
    if eqm is None:
        return row
    row.update(feasible=True, q=eqm.q, mu0=eqm.mu0, V0=eqm.V0, V1=eqm.V1, avg_coop=average_cooperation(eqm),
               margin_b=eqm.margins["junior_vs_senior"], margin_d=eqm.margins["defect_and_erase"])
    return row


def scan(g, l, hat_delta, bar_deltas):
    return [scan_row(g, l, hat_delta, b) for b in bar_deltas]

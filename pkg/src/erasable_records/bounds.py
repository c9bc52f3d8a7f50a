"""Long-lifespan impossibility bound: constants, value bands and the bound chain.

Records are grouped into value bands of width (1 - delta) c / (2 delta)
anchored at the newborn's value. Within each band we measure the stay
probability P, the probability pi of leaving the dominant action, the stay
probability P' given such a deviation, and the cross-band flows Q; the chain
of inequalities ending in

    average non-dominant play <= 2^K * X * (1 - bar_delta)

is then checked on the measured quantities.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoDominantAction, NotCertified, SupportShifts
from .game import non_shifting_support, strictly_dominant_action
from .records import average_action_distribution, average_payoff, build_kernel, role_view
from .values import CERTIFY_TOL, incentive_gap, secure_defection_payoff

LOG10_2 = math.log10(2.0)


@dataclass(frozen=True)
class TheoremOneConstants:
    dominant_action: int
    c_star: float
    c_min: float
    eta: float
    span: float
    delta: float
    form: str = "max"

    @property
    def cost(self) -> float:
        return self.c_star if self.form == "max" else self.c_min

    @property
    def D(self) -> float:
        return self.span / self.eta

    @property
    def K_bound(self) -> float:
        return self.span / self.cost * 2.0 * self.delta / (1.0 - self.delta) + 1.0

    @property
    def X(self) -> float:
        return 2.0 * self.D / self.cost

    @property
    def band_width(self) -> float:
        return (1.0 - self.delta) * self.cost / (2.0 * self.delta)

    def variant(self, form: str) -> "TheoremOneConstants":
        if form not in ("max", "min"):
            raise ValueError(form)
        return dataclasses.replace(self, form=form)

    def at_delta(self, delta: float) -> "TheoremOneConstants":
        return dataclasses.replace(self, delta=delta)

    def to_json(self) -> dict:
        return {
            "form": self.form, "dominant_action": self.dominant_action, "c_star": self.c_star,
            "c_min": self.c_min, "cost": self.cost, "eta": self.eta, "span": self.span,
            "delta": self.delta, "D": self.D, "K_bound": self.K_bound, "X": self.X,
            "band_width": self.band_width,
        }


def theorem1_constants(game, monitoring, role: int, delta: float) -> TheoremOneConstants:
    a_star = strictly_dominant_action(game, role)
    if a_star is None:
        raise NoDominantAction(f"role {role} has no strictly dominant action")
    support = non_shifting_support(monitoring, role)
    if not support["holds"]:
        raise SupportShifts(f"role {role}'s signal support moves with opponents' actions")
    u = np.moveaxis(game.payoff[role], role, 0).reshape(game.action_count(role), -1)
    costs = u[a_star][None, :] - np.delete(u, a_star, axis=0)
    lo, hi = game.payoff_range(role)
    return TheoremOneConstants(int(a_star), float(costs.max()), float(costs.min()),
                               support["eta"], hi - lo, float(delta))


@dataclass(frozen=True)
class UpperBound:
    log10: float
    vacuous: bool

    @property
    def value(self) -> float:
        if self.log10 == -math.inf:
            return 0.0
        return 10.0 ** self.log10 if self.log10 < 300 else math.inf


def theorem1_upper_bound(constants: TheoremOneConstants, bar_delta: float) -> UpperBound:
    """2^floor(K) * X * (1 - bar_delta), computed in log space."""
    if bar_delta >= 1.0:
        return UpperBound(-math.inf, False)
    log10 = math.floor(constants.K_bound) * LOG10_2 + math.log10(constants.X) + math.log10(1.0 - bar_delta)
    return UpperBound(log10, log10 > 0.0)


def bound_threshold(constants: TheoremOneConstants, target: float = 0.01) -> dict:
    """Survival probability at which the bound first drops to ``target``."""
    log10_gap = math.log10(target) - math.floor(constants.K_bound) * LOG10_2 - math.log10(constants.X)
    return {"log10_one_minus_bar_delta": log10_gap, "bar_delta": 1.0 - 10.0 ** log10_gap}


@dataclass(frozen=True)
class Inequality:
    id: str
    band: int | None
    lhs: float
    rhs: float
    tol: float = 1e-9

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.tol

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass(eq=False)
class BandReport:
    form: str
    band_of_state: np.ndarray
    mass: np.ndarray
    P: np.ndarray
    P_prime: np.ndarray
    pi: np.ndarray
    Q: np.ndarray
    inequalities: list = field(default_factory=list)
    average_non_dominant: float = 0.0
    bound: UpperBound | None = None

    @property
    def K(self) -> int:
        return len(self.mass) - 1

    def failures(self, ids=None):
        return [q for q in self.inequalities if not q.holds and (ids is None or q.id in ids)]

    def all_hold(self, ids=None) -> bool:
        return not self.failures(ids)

    def to_csv_rows(self):
        rows = []
        for q in self.inequalities:
            k = q.band
            stats = (self.mass[k], self.P[k], self.P_prime[k], self.pi[k]) if k is not None else (math.nan,) * 4
            rows.append((self.form, "" if k is None else k, *stats, q.id, int(q.holds), q.slack))
        return rows


CSV_COLUMNS = ("form", "band", "mass", "P", "P_prime", "pi", "inequality", "holds", "slack")


def band_decomposition_and_chain(automaton, profile, mu, monitoring, game, values, constants: TheoremOneConstants,
                                 bar_delta: float, role: int = 0, certify_tol: float = CERTIFY_TOL,
                                 tol: float = 1e-9) -> BandReport:
    delta = constants.delta
    audit = incentive_gap(automaton, profile, mu, monitoring, game, delta, role, tol=certify_tol)
    if not audit.certified(certify_tol):
        raise NotCertified(f"profile is not an equilibrium (max gap {audit.max_gap:.3e})")
    v = np.asarray(getattr(values, "values", values), dtype=float)
    mu_own, mu_opp = np.asarray(mu[role]), np.asarray(mu[1 - role])
    own, opp = profile[role], profile[1 - role]
    a_star = constants.dominant_action
    w = constants.band_width
    live = mu_own > 1e-14

    rel = v - v[automaton.initial]
    band = np.floor(rel / w + 1e-9).astype(int)
    monotone = float(rel[live].min()) if live.any() else 0.0
    band = np.where(live, np.maximum(band, 0), -1)
    K = int(band.max())
    nb = K + 1

    kernel = build_kernel(automaton, own, mu_opp, opp, monitoring, game, role)
    view = role_view(automaton, opp, monitoring, game, role)
    member = np.zeros((automaton.n_states, nb))
    member[live, band[live]] = 1.0
    mass = mu_own @ member
    flows = (mu_own[:, None] * member).T @ kernel @ member  # mass-weighted j -> k
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = np.where(mass[:, None] > 0, flows / mass[:, None], 0.0)
    P = np.diag(Q).copy()

    deviate = 1.0 - own.action_rule[:, :, a_star]  # [r, q]
    dev_mass = mu_own * (mu_opp @ deviate.T)  # per state
    non_dom = own.action_rule.copy()
    non_dom[:, :, a_star] = 0.0
    sig = np.einsum("q,rqa,rqas->rs", mu_opp, non_dom, view.signal)  # deviation-weighted signal probs
    e = own.erasure_rule
    next_band = np.where(live[automaton.step], band[automaton.step], -2)
    stay = (1.0 - e) * (next_band == band[:, None]) + e
    gain = np.maximum(v[automaton.step], v[:, None]) - v[:, None]
    pi = np.zeros(nb)
    P_prime = np.full(nb, np.nan)
    exp_gain = np.full(nb, np.nan)
    for k in range(nb):
        in_k = live & (band == k)
        d = float(dev_mass[in_k].sum())
        if mass[k] > 0:
            pi[k] = d / mass[k]
        if d > 1e-14:
            P_prime[k] = float((mu_own[in_k, None] * sig[in_k] * stay[in_k]).sum()) / d
            exp_gain[k] = float((mu_own[in_k, None] * sig[in_k] * gain[in_k]).sum()) / d

    c, D, X = constants.cost, constants.D, constants.X
    ineq = [Inequality("value_monotone", None, -monotone, tol, 0.0)]
    lower = np.tril(Q, -1)
    ineq.append(Inequality("upward_only", None, float(lower[mass > 0].sum()), 0.0, tol))
    reach = np.einsum("q,rqa,rqas->rs", mu_opp, own.action_rule, view.signal) > 0
    kept = reach & (e < 1.0) & live[:, None]
    jump = float(np.max(np.where(kept, v[automaton.step] - v[:, None], -np.inf))) if kept.any() else 0.0
    ineq.append(Inequality("jump", None, jump, (1 - delta) / delta * D, tol))
    for k in range(nb):
        if not np.isnan(P_prime[k]):
            ineq.append(Inequality("deviation_gain", k, (1 - delta) / delta * c, exp_gain[k], tol))
            ineq.append(Inequality("deviation_stay", k, P_prime[k], 1 - c / (2 * D), tol))
        if mass[k] > 0:
            ineq.append(Inequality("band_stay", k, P[k], 1 - pi[k] * c / (2 * D), tol))
    leave = mass * (1.0 - P)
    ineq.append(Inequality("newborn_exit", 0, leave[0], 1 - bar_delta, tol))
    inflow = np.array([float(flows[:k, k].sum()) for k in range(nb)])
    for k in range(1, nb):
        ineq.append(Inequality("exit_vs_inflow", k, leave[k], bar_delta * inflow[k], tol))
    for k in range(nb):
        ineq.append(Inequality("exit_doubling", k, leave[k], 2.0 ** max(k - 1, 0) * (1 - bar_delta), tol))
    ineq.append(Inequality("exit_doubling", None, float(leave.sum()), 2.0 ** K * (1 - bar_delta), tol))
    ineq.append(Inequality("newborn_deviation", 0, mass[0] * pi[0], X * (1 - bar_delta), tol))
    for k in range(1, nb):
        ineq.append(Inequality("deviation_vs_inflow", k, mass[k] * pi[k], bar_delta * X * inflow[k], tol))
    avg_non_dom = 1.0 - float(average_action_distribution(mu, profile, role)[a_star])
    ineq.append(Inequality("average_deviation", None, avg_non_dom, 2.0 ** K * X * (1 - bar_delta), tol))
    bound = theorem1_upper_bound(constants, bar_delta)
    ineq.append(Inequality("average_deviation_bound", None, avg_non_dom, bound.value, tol))
    return BandReport(constants.form, band, mass, P, P_prime, pi, Q, ineq, avg_non_dom, bound)


def chain_both_forms(automaton, profile, mu, monitoring, game, values, constants, bar_delta, role=0, **kw) -> dict:
    return {form: band_decomposition_and_chain(automaton, profile, mu, monitoring, game, values,
                                               constants.variant(form), bar_delta, role, **kw)
            for form in ("max", "min")}


def theorem4_certificate(automata, mu, profile, game, tol: float = 1e-9, cooperate="C") -> dict:
    """Secure-defection rationality check for both roles of a prisoner's dilemma."""
    if not isinstance(automata, (tuple, list)):
        automata = (automata, automata)
    roles = []
    for role in (0, 1):
        c = game.action_index(role, cooperate)
        d = game.action_index(role, "D")
        coop = float(average_action_distribution(mu, profile, role)[c])
        secure = secure_defection_payoff(mu[1 - role], profile[1 - role], game, role, d, automata[role].initial)
        avg = average_payoff(mu, profile, game, role)
        roles.append({"role": role, "average_cooperation": coop, "secure_payoff": secure,
                      "average_payoff": avg, "rational": avg >= secure - tol, "slack": avg - secure})
    return {
        "roles": roles,
        "rational": all(r["rational"] for r in roles),
        "min_role_average_cooperation": min(r["average_cooperation"] for r in roles),
    }

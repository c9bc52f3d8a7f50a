import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from erasable_records import junior_senior as js
from erasable_records import purification as pu
from erasable_records.errors import NonConvergence


@pytest.fixture(scope="module")
def base_perturbed():
    return pu.perturbed_fixed_point(2, 1, 0.95, 0.9, pu.ShockSpec(0.01), start_q=0.1)


def _triangular_pdf(z):
    return max(0.0, (2 - abs(z)) / 4)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.5, 2.5))
def test_uniform_difference_closed_forms(t):
    shock = pu.ShockSpec(1.0)
    lo = min(max(t, -2.0), 2.0)
    surv = integrate.quad(_triangular_pdf, lo, 2, points=[0.0], epsabs=1e-13)[0]
    exc = integrate.quad(lambda z: (z - t) * _triangular_pdf(z), lo, 2, points=[0.0], epsabs=1e-13)[0]
    assert shock.survival(t) == pytest.approx(surv, abs=1e-10)
    assert shock.excess(t) == pytest.approx(exc, abs=1e-10)


def test_quantile_family_approximates_uniform():
    q = pu.ShockSpec(1.0, family="quantile", quantile=lambda u: 2 * u - 1, grid=200)
    u = pu.ShockSpec(1.0)
    ts = np.linspace(-2.2, 2.2, 45)
    np.testing.assert_allclose(q.survival(ts), u.survival(ts), atol=5e-3)
    np.testing.assert_allclose(q.excess(ts), u.excess(ts), atol=5e-3)
    assert q.mean == pytest.approx(0.0, abs=1e-12)


def test_shock_validation():
    with pytest.raises(ValueError):
        pu.ShockSpec(0.0)
    with pytest.raises(ValueError):
        pu.ShockSpec(1.0, family="quantile")
    with pytest.raises(ValueError):
        pu.ShockSpec(1.0, family="quantile", quantile=lambda u: np.full_like(u, np.inf))


def test_base_case_near_unperturbed(base_eqm, base_perturbed):
    e, p = base_eqm, base_perturbed
    eps = 0.01
    assert p.converged and p.residual <= 1e-10
    jj = abs(p.cooperation[0, 0] - e.q)
    assert jj <= 2 * eps  # measured constant is below 1
    # strict cells: the flow-unit margins exceed the shock range 2*eps
    assert p.cooperation[0, 1] == 1.0
    assert p.cooperation[1, 0] == 0.0 and p.cooperation[1, 1] == 0.0
    np.testing.assert_allclose(p.choice_prob.sum(axis=-1), 1.0)
    assert abs(p.mu[0] - e.mu0) <= eps


def test_large_shocks_wash_out_payoffs():
    p = pu.perturbed_fixed_point(2, 1, 0.95, 0.9, pu.ShockSpec(100.0))
    np.testing.assert_allclose(p.cooperation, 0.5, atol=0.01)


def test_custom_family_fixed_point(base_eqm):
    shock = pu.ShockSpec(0.01, family="quantile", quantile=lambda u: np.sin(np.pi * (u - 0.5)))
    p = pu.perturbed_fixed_point(2, 1, 0.95, 0.9, shock, start_q=0.1)
    assert p.residual <= 1e-10
    assert abs(p.cooperation[0, 0] - base_eqm.q) <= 0.05


@pytest.mark.parametrize("g,l", [(1, 2), (1, 1)])
def test_supermodular_cooperation_decays(g, l):
    seq = []
    for eps in (0.1, 0.05, 0.01):
        found = pu.multi_start(g, l, 0.95, 0.9, pu.ShockSpec(eps))
        assert not found["failures"]
        seq.append(max(e.cooperation[0, 0] for e in found["equilibria"]))
    assert all(b <= a for a, b in zip(seq, seq[1:]))
    assert seq[-1] <= 0.02


def test_purification_passes_for_submodular(base_eqm):
    rep = pu.purification_check(base_eqm, [0.1, 0.05, 0.01])
    assert rep.decreasing and rep.passed
    assert rep.distances[-1] <= 0.1
    assert rep.slope_defined and rep.slope > 0
    assert all(np.isfinite(rep.lipschitz))
    assert len(rep.to_csv_rows()) == 3 * 4


def test_purification_fails_for_forced_supermodular_candidate():
    cand = js.candidate(1, 2, 0.95, 0.9, 0.5)
    rep = pu.purification_check(cand, [0.1, 0.05, 0.01], start_q=0.5)
    assert not rep.passed
    assert all(e.cooperation[0, 0] <= 0.02 for e in rep.equilibria)


def test_single_epsilon_slope_flagged(base_eqm):
    rep = pu.purification_check(base_eqm, [0.05])
    assert rep.slope is None and not rep.slope_defined
    assert len(rep.distances) == 1


def test_epsilons_must_decrease(base_eqm):
    with pytest.raises(ValueError):
        pu.purification_check(base_eqm, [0.01, 0.1])


def test_nonconvergence_reported():
    with pytest.raises(NonConvergence) as exc:
        pu.perturbed_fixed_point(2, 1, 0.95, 0.9, pu.ShockSpec(0.01), max_iter=2, polish=False)
    assert exc.value.residual > 1e-10 and exc.value.trace


@pytest.mark.parametrize("g,l", [(1, 2), (0.5, 1), (1, 3)])
def test_supermodular_certificate_grid(g, l):
    for bd in (0.3, 0.6, 0.9):
        rows = pu.supermodular_certificate(g, l, 0.95, bd, [0.1, 0.5, 0.9])
        for r in rows:
            assert r["certificate_nonpositive"]
            assert r["certificate"] == pytest.approx(r["q"] * r["mu1"] * (g - l), abs=1e-15)
            assert r["max_gap"] > 0
            assert not r["certified"]


def test_report_header_labels_evidence():
    assert "evidence, not proof" in pu.REPORT_HEADER

"""Analytic bounds: geometric moment table, theta, root-visit series,
speed bounds, tail/moment bounds, covariance window, report assembly.

geometric_moment gets a brute-force series oracle; the benchmark speed
chain is pinned to its reference value end to end.
"""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treespeed import bounds
from treespeed.bounds import (
    build_bounds_report, c_constant, covariance_bounds, ell1_second_moment_bound,
    ell1_tail_bound, env_drift_moment, env_inverse_moment, even_return_order,
    geom_coefficients, geometric_moment, geometric_moment_fraction,
    l_rho_moment_bound, orrw_return_product, pi_moment_bound,
    speed_lower_bound, speed_upper_bound, tau1_moment_bound, theta)
from treespeed.branching import BranchingSummary
from treespeed.model import EnvSpec

ATOM_ONE = EnvSpec(model="rwre", b=2, support=((1.0, 1.0),))


def _series_moment(n: int, q: float) -> float:
    """Brute-force E[G^n] = sum k^n q (1-q)^(k-1), summed to convergence."""
    total, k, carry = 0.0, 1, q
    while True:
        term = k ** n * carry
        total += term
        if k > n / q and term < 1e-17 * total:
            return total
        carry *= 1.0 - q
        k += 1


# -- geometric moments ---------------------------------------------------

def test_geom_coefficient_rows():
    assert geom_coefficients(1) == (1,)
    assert geom_coefficients(2) == (-1, 2)
    assert geom_coefficients(3) == (1, -6, 6)
    assert c_constant(1) == 1
    assert c_constant(2) == 2
    assert c_constant(3) == 7


def test_geometric_moment_closed_forms():
    for q in (0.2, 0.5, 0.9):
        assert geometric_moment(1, q) == pytest.approx(1 / q, rel=1e-14)
        assert geometric_moment(2, q) == pytest.approx((2 - q) / q ** 2,
                                                       rel=1e-14)
        assert geometric_moment(3, q) == pytest.approx(
            (q * q - 6 * q + 6) / q ** 3, rel=1e-13)
    assert geometric_moment_fraction(2, Fraction(1, 2)) == 6


def test_geometric_moment_vs_series_oracle():
    for n in range(1, 7):
        for tenths in range(1, 10):
            q = tenths / 10
            direct = _series_moment(n, q)
            value = geometric_moment(n, q)
            assert abs(value - direct) / direct < 1e-10, (n, q)


def test_geometric_moment_validation():
    with pytest.raises(ValueError):
        geometric_moment(0, 0.5)
    with pytest.raises(ValueError):
        geometric_moment(25, 0.5)  # beyond the integer-row cap
    with pytest.raises(ValueError):
        geometric_moment(2, 0.0)
    with pytest.raises(ValueError):
        geometric_moment(2, 1.5)
    with pytest.raises(ValueError):
        geometric_moment_fraction(2, Fraction(0))


@given(st.integers(min_value=1, max_value=8),
       st.floats(min_value=0.01, max_value=1.0))
@settings(max_examples=150)
def test_geometric_moment_basic_shape(n, q):
    value = geometric_moment(n, q)
    assert value >= 1.0 - 1e-12  # G >= 1
    if n < 8:
        assert geometric_moment(n + 1, q) >= value - 1e-12
    assert geometric_moment(n, 1.0) == pytest.approx(1.0)


# -- environment moments and theta ---------------------------------------

def test_env_moments_single_atom():
    assert env_inverse_moment(ATOM_ONE, 1) == pytest.approx(1.0)
    assert env_drift_moment(ATOM_ONE, 1) == pytest.approx(1.5)
    assert env_drift_moment(ATOM_ONE, 2) == pytest.approx(2.25)


def test_env_moments_match_benchmark_closed_forms(kappa30_spec):
    kappa = 1 / 30
    assert env_inverse_moment(kappa30_spec, 2) == pytest.approx(
        4 / 49 + 4864 / 441 * kappa, rel=1e-12)
    assert env_drift_moment(kappa30_spec, 2) == pytest.approx(
        64 / 49 + 2560 / 441 * kappa, rel=1e-12)


def test_env_moments_iid_coupling_averages_sums():
    spec = EnvSpec(model="rwre", b=2, support=((1.0, 0.5), (2.0, 0.5)),
                   coupling="iid")
    # four equally likely sums: 2, 3, 3, 4
    want = (1.5 + 4 / 3 + 4 / 3 + 1.25) / 4
    assert env_drift_moment(spec, 1) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        env_inverse_moment(EnvSpec(model="orrw", b=2, delta=2.0), 1)


def test_theta_values():
    # base level: c(p) * drift moment
    assert theta(ATOM_ONE, 1, 1) == pytest.approx(1.5)
    assert theta(ATOM_ONE, 2, 1) == pytest.approx(2 * 2.25)
    # E[A^-p] = 1 hits the removable singularity of the geometric ratio
    assert theta(ATOM_ONE, 1, 2) == pytest.approx(1.5 * 2 * 2)
    assert theta(ATOM_ONE, 1, 3) == pytest.approx(1.5 * 2 * 3)
    # away from the singularity the ratio is (x^n - 1)/(x - 1)
    spec = EnvSpec(model="rwre", b=2, support=((0.5, 1.0),))
    x = env_inverse_moment(spec, 1)
    assert theta(spec, 1, 2) == pytest.approx(
        env_drift_moment(spec, 1) * 2 * (x + 1.0))
    with pytest.raises(ValueError):
        theta(ATOM_ONE, 1, 0)


def test_survival_bracket_limits():
    assert bounds._survival_bracket(0.0, 3) == 3.0
    assert bounds._survival_bracket(1e-12, 3) == pytest.approx(3.0, rel=1e-9)
    assert bounds._survival_bracket(1.0, 3) == 1.0
    assert bounds._survival_bracket(0.5, 2) == pytest.approx(1.5)


# -- root visit bounds -------------------------------------------------------

def test_l_rho_orrw_geometric_domination():
    spec = EnvSpec(model="orrw", b=2, delta=2.0)
    alpha = 0.9691
    got = l_rho_moment_bound(spec, 1, 1, alpha)
    s = (1.0 - alpha) * 2 / 4
    assert got.applicable and got.method == "geometric-domination"
    assert got.value == pytest.approx(1.0 / s, rel=1e-12)

    soft = l_rho_moment_bound(EnvSpec(model="orrw", b=2, delta=0.5), 1, 1, 0.3)
    assert not soft.applicable and "delta > 1" in soft.reason

    dead = l_rho_moment_bound(spec, 1, 1, 1.0)
    assert not dead.applicable


def test_l_rho_series_alpha_zero_collapses_to_first_term(kappa30_spec):
    got = l_rho_moment_bound(kappa30_spec, 1, 1, 0.0)
    assert got.applicable
    assert got.value == pytest.approx(math.sqrt(theta(kappa30_spec, 2, 1)),
                                      rel=1e-12)


def test_l_rho_series_truncation_stability(kappa30_spec, kappa30_bounds):
    alpha = kappa30_bounds.branching.alpha_psi
    tight = l_rho_moment_bound(kappa30_spec, 1, 1, alpha, truncation=1e-14)
    loose = l_rho_moment_bound(kappa30_spec, 1, 1, alpha, truncation=1e-10)
    assert tight.value == pytest.approx(loose.value, rel=1e-8)
    assert tight.n_terms >= loose.n_terms
    with pytest.raises(ArithmeticError):
        l_rho_moment_bound(kappa30_spec, 1, 1, alpha, max_terms=1)
    with pytest.raises(ValueError):
        l_rho_moment_bound(kappa30_spec, 0, 1, alpha)


# -- speed bounds --------------------------------------------------------------

def test_speed_lower_benchmark_chain(kappa30_spec, kappa30_bounds):
    sp = kappa30_bounds.speed_lower
    assert sp.applicable and sp.method == "root-visit-series"
    assert sp.value == pytest.approx(0.12299114920883171, rel=1e-12)
    assert 0.1229 - 2e-4 <= sp.value <= 0.1229 + 6e-4
    assert sp.components["series_terms"] == 8
    alpha = kappa30_bounds.branching.alpha_psi
    assert sp.value == pytest.approx(
        (1 - alpha) / sp.components["mean_root_visits_bound"], rel=1e-12)
    # RWRE has no analytic upper bound in this toolkit
    assert not kappa30_bounds.speed_upper.applicable


def test_speed_bounds_orrw_regimes():
    strong = EnvSpec(model="orrw", b=2, delta=2.0)
    summary = BranchingSummary(status="ok", psi=4, m_psi=16 / 15,
                               alpha_psi=0.9691, zeta=43, gamma=0.97,
                               vartheta=1)
    sp = speed_lower_bound(strong, summary)
    assert sp.applicable and sp.method == "reinforced-escape"
    assert sp.value == pytest.approx((1 - 0.9691) ** 2 * 0.5, rel=1e-12)
    assert speed_upper_bound(strong).value == pytest.approx(0.5)

    weak = EnvSpec(model="orrw", b=2, delta=0.5)
    sp = speed_lower_bound(weak, summary)
    assert sp.applicable and sp.method == "simple-walk-comparison"
    assert sp.value == pytest.approx(1.5 / 2.5, rel=1e-12)
    assert speed_upper_bound(weak).value == pytest.approx(0.8)

    neither = EnvSpec(model="orrw", b=2, delta=1.0)
    sp = speed_lower_bound(neither, summary)
    assert not sp.applicable and "delta = 1" in sp.reason
    assert speed_upper_bound(neither).value == pytest.approx(2 / 3)

    gated = speed_lower_bound(strong, BranchingSummary(
        status="no_supercritical_psi"))
    assert not gated.applicable


# -- first regeneration: tail, Pi, tau_1 ----------------------------------------

def test_ell1_tail_values():
    assert ell1_tail_bound(1, 0.42) == 1.0
    assert ell1_tail_bound(3, 0.4) == pytest.approx(0.16)
    with pytest.raises(ValueError):
        ell1_tail_bound(0, 0.4)
    with pytest.raises(ValueError):
        ell1_tail_bound(2, 1.0)


def test_ell1_second_moment_closed_form_matches_series():
    for gamma, s in ((0.4165191282353014, 3), (0.9, 172), (0.0, 3)):
        closed = ell1_second_moment_bound(gamma, s, 1)
        brute = sum(((n * s) ** 2 - ((n - 1) * s) ** 2)
                    * gamma ** max(n - 2, 0) for n in range(1, 4000))
        assert closed == pytest.approx(brute, rel=1e-9)


def test_pi_moment_hand_example():
    # gamma = 1/4, psi * zeta = 1: the bound collapses to
    # 2 * 2 * (M(1, 1/2) - 1) * sqrt(M(2, 1 - alpha)) = 4 sqrt(M(2, 1/2))
    alpha = 0.5
    got = pi_moment_bound(1, 0.25, 1, 1, alpha)
    assert got == pytest.approx(4.0 * math.sqrt(geometric_moment(2, 0.5)),
                                rel=1e-12)


def test_pi_moment_degenerate_gamma():
    # gamma = 0 with one-level blocks: only the first epoch contributes
    assert pi_moment_bound(1, 0.0, 1, 1, 0.5) \
        == pytest.approx(math.sqrt(geometric_moment(2, 0.5)), rel=1e-12)
    assert pi_moment_bound(1, 0.0, 1, 2, 0.5) == math.inf
    with pytest.raises(ValueError):
        pi_moment_bound(0, 0.25, 1, 1, 0.5)
    with pytest.raises(ValueError):
        pi_moment_bound(13, 0.25, 1, 1, 0.5)  # 2p beyond the table
    with pytest.raises(ValueError):
        pi_moment_bound(1, 0.25, 1, 1, 1.0)
    with pytest.raises(ValueError):
        pi_moment_bound(1, 1.0, 1, 1, 0.5)


def test_pi_moment_grows_with_gamma():
    values = [pi_moment_bound(1, g, 1, 3, 0.2)
              for g in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert values == sorted(values)


def test_tau1_hoelder_assembly(kappa30_spec, kappa30_bounds):
    s = kappa30_bounds.branching
    got = tau1_moment_bound(kappa30_spec, 1, 1, s)
    assert got.applicable
    l2 = l_rho_moment_bound(kappa30_spec, 2, 1, s.alpha_psi).value
    pi8 = pi_moment_bound(8, s.gamma, s.psi, s.zeta, s.alpha_psi)
    want = math.pi ** 2 / 6 * math.sqrt(l2) * pi8 ** 0.25
    assert got.value == pytest.approx(want, rel=1e-12)
    assert got.components["l_rho"] == pytest.approx(l2, rel=1e-12)

    second = tau1_moment_bound(kappa30_spec, 2, 1, s)
    assert second.applicable and second.value > got.value
    assert "pi_mid" in second.components


def test_tau1_rejects_fractional_orders(kappa30_spec, kappa30_bounds):
    s = kappa30_bounds.branching
    got = tau1_moment_bound(kappa30_spec, 2, 3, s)
    assert not got.applicable and "not integers" in got.reason
    capped = tau1_moment_bound(kappa30_spec, 1, 1, s, cap=12)
    assert not capped.applicable and "cap" in capped.reason
    gated = tau1_moment_bound(kappa30_spec, 1, 1,
                              BranchingSummary(status="no_supercritical_psi"))
    assert not gated.applicable


# -- covariance window -----------------------------------------------------------

def test_even_return_order():
    assert even_return_order(1.0) == 4
    assert even_return_order(0.5) == 8
    assert even_return_order(0.1229) == 26
    with pytest.raises(ValueError):
        even_return_order(0.0)


def test_orrw_return_product_hand_value():
    # (b/(b+d))^2 (d/(b+d))^3 (d/(b-1+2d))^3 at b=2, d=2, a=8
    assert orrw_return_product(2, 2.0, 8) == Fraction(1, 500)
    with pytest.raises(ValueError):
        orrw_return_product(2, 2.0, 7)
    with pytest.raises(ValueError):
        orrw_return_product(2, 2.0, 2)


def test_covariance_window_benchmark(kappa30_bounds):
    cov = kappa30_bounds.covariance
    assert cov.applicable
    assert cov.a == 26
    assert 0.0 < cov.lower < cov.upper
    assert cov.components["walk_factor"] > 0.0


def test_covariance_gating(kappa30_spec, kappa30_bounds):
    s = kappa30_bounds.branching
    no_speed = covariance_bounds(kappa30_spec, s, None, 10.0, 100.0)
    assert not no_speed.applicable and "speed" in no_speed.reason
    no_tau = covariance_bounds(kappa30_spec, s, 0.12, None, None)
    assert not no_tau.applicable
    gated = covariance_bounds(kappa30_spec,
                              BranchingSummary(status="no_supercritical_psi"),
                              0.12, 10.0, 100.0)
    assert not gated.applicable


# -- full report --------------------------------------------------------------

def test_bounds_report_benchmark_shape(kappa30_bounds):
    d = kappa30_bounds.to_dict()
    assert d["transience"]["verdict"] == "transient"
    assert d["speed"]["lower_applicable"]
    assert d["first_regeneration"]["tail_base"] == pytest.approx(
        0.4165191282353014, rel=1e-9)
    assert d["first_regeneration"]["block_level"] == 3  # psi * zeta
    assert d["first_regeneration"]["second_moment"] > 0
    assert set(d["pi_moments"]) == {"1", "2"}
    assert set(d["env_moments"]) == {"1", "2", "3"}  # p in {1, 2, eps+1, eps+2}
    assert {(r["p"], r["n"]) for r in d["theta"]} \
        == {(p, n) for p in (2, 3) for n in (1, 2, 3)}
    assert [row["p"] for row in d["tau1_moments"]] == [1, 2]
    assert all(row["applicable"] for row in d["tau1_moments"])


def test_bounds_report_gates_recurrent_env():
    quarter = EnvSpec(model="rwre", b=2, support=((0.25, 1.0),))
    report = build_bounds_report(quarter)
    assert report.transience.verdict == "recurrent"
    assert report.branching.status == "no_supercritical_psi"
    assert not report.speed_lower.applicable
    assert not report.covariance.applicable
    assert any("gated off" in n for n in report.notes)
    # boundary case gates the same way without claiming recurrence
    half = EnvSpec(model="rwre", b=2, support=((0.5, 1.0),))
    assert build_bounds_report(half).transience.verdict == "inapplicable"


def test_bounds_report_orrw_delta_one_keeps_upper_bound():
    report = build_bounds_report(EnvSpec(model="orrw", b=2, delta=1.0),
                                 psi=2, offspring_samples=2000)
    assert not report.speed_lower.applicable
    assert "delta = 1" in report.speed_lower.reason
    assert report.speed_upper.value == pytest.approx(2 / 3)


def test_bounds_report_deterministic(orrw_spec):
    a = build_bounds_report(orrw_spec, psi=4, offspring_samples=3000, seed=5)
    b = build_bounds_report(orrw_spec, psi=4, offspring_samples=3000, seed=5)
    assert a.to_dict() == b.to_dict()

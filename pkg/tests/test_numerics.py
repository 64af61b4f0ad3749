import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mp_ksup_cdf, mp_ksup_sf
from dyadic_coupling import numerics as N


@pytest.mark.parametrize("x", [-3.0, -0.7, 0.0, 1e-9, 0.3, 1.0, 2.5, 6.0])
def test_erf_erfc_match_mpmath(x):
    assert N.erf(x) == pytest.approx(float(mpmath.erf(x)), rel=1e-15, abs=1e-300)
    assert N.erfc(x) == pytest.approx(float(mpmath.erfc(x)), rel=1e-14)


def test_erf_vectorised_agrees_with_scalar():
    xs = np.linspace(-4, 4, 41)
    np.testing.assert_allclose(N.erf(xs), [N.erf(float(x)) for x in xs], rtol=1e-15, atol=1e-16)


@pytest.mark.parametrize("x", [-1e-6, -0.01, -0.5, -1.0, -4.0, -30.0, -200.0])
def test_exp_integral_matches_mpmath(x):
    assert N.exp_integral_ei(x) == pytest.approx(float(mpmath.ei(x)), rel=1e-13)


@pytest.mark.parametrize("x", [0.0, 1.0])
def test_exp_integral_rejects_nonnegative(x):
    with pytest.raises(ValueError):
        N.exp_integral_ei(x)


@pytest.mark.parametrize("z", [0.1, 0.25, 0.5, 0.8, 1.0, 1.19, 1.21, 1.5, 2.0, 3.0, 5.0])
def test_sup_cdf_matches_series_and_theta(z):
    cdf, sf = N.kolmogorov_sup_cdf(z), N.kolmogorov_sup_sf(z)
    assert cdf == pytest.approx(float(mp_ksup_cdf(z)), abs=2e-15)
    assert sf == pytest.approx(float(mp_ksup_sf(z)), rel=1e-12, abs=1e-300)
    assert cdf + sf == pytest.approx(1.0, abs=2e-15)


def test_sup_cdf_limits():
    assert N.kolmogorov_sup_cdf(1e-3) == 0.0
    assert N.kolmogorov_sup_cdf(40.0) == 1.0
    # the survival keeps relative precision deep in the tail
    assert N.kolmogorov_sup_sf(8.0) == pytest.approx(float(mp_ksup_sf(8)), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.02, 10.0), st.floats(0.02, 10.0))
def test_sup_cdf_is_monotone_probability(a, b):
    lo, hi = min(a, b), max(a, b)
    f_lo, f_hi = N.kolmogorov_sup_cdf(lo), N.kolmogorov_sup_cdf(hi)
    assert 0.0 <= f_lo <= f_hi + 1e-15 <= 1.0 + 1e-15


def test_series_accuracy_validation():
    with pytest.raises(ValueError):
        N.SeriesAccuracy(abs_tol=0)
    with pytest.raises(ValueError):
        N.SeriesAccuracy(max_terms=2)
    with pytest.raises(ValueError):
        N.QuadratureSpec(rel_tol=-1)


def test_gauss_kronrod_rule_is_consistent():
    x7, w7 = np.polynomial.legendre.leggauss(7)
    np.testing.assert_allclose(N.GK_NODES[1::2], x7, atol=1e-15)
    np.testing.assert_allclose(N.GK_GAUSS_WEIGHTS[1::2], w7, atol=1e-15)
    assert N.GK_KRONROD_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-14)
    # Kronrod rule integrates degree-22 polynomials exactly
    x, w = N.GK_NODES, N.GK_KRONROD_WEIGHTS
    for deg in (0, 6, 14, 22):
        assert w @ x**deg == pytest.approx(2.0 / (deg + 1), abs=1e-14)


@pytest.mark.parametrize("f, dom, exact, pts", [
    (np.exp, (0.0, 1.0), math.e - 1, ()),
    (lambda x: np.exp(-x), (0.0, math.inf), 1.0, ()),
    (lambda x: 1.0 / (1.0 + x * x), (0.0, math.inf), math.pi / 2, ()),
    (lambda x: 1.0 / np.sqrt(x), (0.0, 1.0), 2.0, ()),
    (np.abs, (-1.0, 2.0), 2.5, (0.0,)),
    (lambda x: np.log(x) / x**2, (1.0, math.inf), 1.0, ()),
])
def test_integrate_known_values(f, dom, exact, pts):
    assert N.integrate(f, dom, points=pts) == pytest.approx(exact, rel=1e-10, abs=1e-12)


def test_integrate_reversed_and_empty_domain():
    assert N.integrate(np.exp, (1.0, 0.0)) == pytest.approx(1 - math.e, rel=1e-12)
    assert N.integrate(np.exp, (2.0, 2.0)) == 0.0


def test_integrate_scalar_integrand():
    val = N.integrate(lambda x: math.sin(x), (0.0, math.pi), vectorized=False)
    assert val == pytest.approx(2.0, rel=1e-12)


def test_integrate_budget_exhaustion_raises():
    spec = N.QuadratureSpec(rel_tol=1e-14, abs_tol=1e-300, max_subdivisions=4)
    with pytest.raises(N.QuadratureError) as err:
        N.integrate(lambda x: np.sin(1.0 / x), (1e-4, 1.0), spec)
    assert math.isfinite(err.value.estimate) and err.value.error > 0


def test_invert_monotone_root():
    root = N.invert_monotone(lambda s: s**3, 8.0, (0.0, 10.0), ftol=0.0, xtol_rel=1e-14)
    assert root == pytest.approx(2.0, rel=1e-13)
    root = N.invert_monotone(math.log, 0.0, (0.1, 50.0), ftol=0.0, log_scale=True)
    assert root == pytest.approx(1.0, rel=1e-11)


def test_invert_monotone_endpoints_and_errors():
    assert N.invert_monotone(lambda s: s, 0.0, (0.0, 1.0)) == 0.0
    assert N.invert_monotone(lambda s: s, 1.0, (0.0, 1.0)) == 1.0
    with pytest.raises(N.BracketError):
        N.invert_monotone(lambda s: s, 2.0, (0.0, 1.0))
    with pytest.raises(N.BracketError):
        N.invert_monotone(lambda s: s, 0.5, (1.0, 0.0))


def test_expand_bracket():
    lo, hi = N.expand_bracket(lambda s: s, 1e-5, 1.0, 2.0)
    assert lo <= 1e-5 <= hi
    lo, hi = N.expand_bracket(lambda s: s, 1e5, 1.0, 2.0)
    assert lo <= 1e5 <= hi

"""One test per acceptance criterion, run at the stated tolerance.

Each test prints a ``PASS``/``FAIL criterion N: ...`` line (visible with
``-s``) and the lines are collected into a summary section at the end of the
session.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import erf

from dyadic_coupling import analytics as A
from dyadic_coupling import dyadic_core as D
from dyadic_coupling import montecarlo as M

REPORT = []

PSI_GRID = np.geomspace(0.01, 30.0, 60)

# Endpoint thresholds for the ratio curve, fixed ahead of time from the
# small-psi expansion h ~ psi/sqrt(2 pi) (near p = 1) and an independent
# high-precision evaluation near p = 0 (1.26279...).
RATIO_LO_ENDPOINT = (1.0, 1.27)
RATIO_HI_ENDPOINT = (1.0, 1.0 + 1e-8)


def report(n, ok, msg, elapsed, budget):
    within = budget is None or elapsed < budget
    line = f"{'PASS' if ok and within else 'FAIL'} criterion {n}: {msg} [{elapsed:.2f}s" \
           + (f" / budget {budget:g}s]" if budget else "]")
    REPORT.append(line)
    print(line)
    return within


def test_criterion_01_two_route_agreement():
    t0 = time.perf_counter()
    diff = np.array([abs(A.failure_prob_dyadic(p) - A.failure_prob_dyadic_series(p)) for p in PSI_GRID])
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(diff <= 1e-8))
    within = report(1, ok, f"max |quadrature - series| = {diff.max():.2e} (tol 1e-8)", elapsed, 10)
    assert ok and within


def test_criterion_02_sandwich():
    t0 = time.perf_counter()
    rep = A.bound_report(PSI_GRID)
    ok_mask = rep.sandwich_ok(1e-9)
    elapsed = time.perf_counter() - t0
    np.testing.assert_allclose(rep.lower_reflection, erf(PSI_GRID / (2 * math.sqrt(2))), rtol=1e-15)
    ok = bool(np.all(ok_mask))
    within = report(2, ok, f"reflection <= h <= min valid bound at {ok_mask.sum()}/{ok_mask.size} points",
                    elapsed, 10)
    assert ok and within


def test_criterion_03_witness_rhs():
    t0 = time.perf_counter()
    rhs = float(A.thm4_rhs(0.33, 0.3348))
    deficit = float(A.thm4_deficit(lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.33, 0.3348))
    elapsed = time.perf_counter() - t0
    ok = round(rhs, 4) >= 0.0019 and deficit <= -0.0019 + 5e-5
    within = report(3, ok, f"rhs(0.33, 0.3348) = {rhs:.6f} (>= 0.0019 to 2 s.f.)", elapsed, 1)
    assert ok and within


def test_criterion_04_witness_gap():
    t0 = time.perf_counter()
    deficit = float(A.thm4_deficit(A.h_tilde_for_gap(1.0025), 0.2361, 0.2408))
    elapsed = time.perf_counter() - t0
    ok = deficit < 0
    within = report(4, ok, f"deficit at c = 1.0025, (0.2361, 0.2408) is {deficit:.3e} (< 0)", elapsed, 1)
    assert ok and within


def test_criterion_05_ratio_curve():
    t0 = time.perf_counter()
    p = np.linspace(1e-4, 1 - 1e-4, 200)
    curve = A.ratio_curve(p)
    elapsed = time.perf_counter() - t0
    r = curve.ratio
    in_band = bool(np.all(r >= 1.0) and r.max() <= 1.5)
    lo_ok = RATIO_LO_ENDPOINT[0] <= r[0] <= RATIO_LO_ENDPOINT[1]
    hi_ok = RATIO_HI_ENDPOINT[0] <= r[-1] <= RATIO_HI_ENDPOINT[1]
    web_err = float(np.max(np.abs(curve.ratio_web - 2.0)))
    ok = in_band and lo_ok and hi_ok and web_err <= 1e-12
    within = report(5, ok, f"max ratio {r.max():.5f} in [1, 1.5]; endpoints {r[0]:.10f}, {r[-1]:.12f}; "
                           f"web |ratio - 2| = {web_err:.1e}", elapsed, 60)
    assert ok and within


def test_criterion_06_exact_sampler_ks():
    t0 = time.perf_counter()
    samples = M.sample_upsilon_exact(20240601, 1.0, 10**6)
    res = M.check_ks("exact_vs_formula", samples, M.analytic_cdf(1.0))
    elapsed = time.perf_counter() - t0
    within = report(6, res.passed, f"KS {res.statistic:.5f} <= {res.threshold:.5f} (n = 1e6)", elapsed, 60)
    assert res.passed and within


@pytest.mark.slow
def test_criterion_07_path_level_simulation():
    t0 = time.perf_counter()
    samples = M.sample_upsilon_pathsim(7, 0.0, 1.0, dt=1e-4, horizon=20.0, n=10**4)
    h1 = A.failure_prob_dyadic(1.0)
    res = M.check_failure_at("failure_at_1", samples, 1.0, h1, 0.01)
    elapsed = time.perf_counter() - t0
    cens = float(np.mean(samples.censored))
    # censored draws are carried at the horizon and flagged, never dropped
    handled = bool(np.all(samples.value[samples.censored] == 20.0)) and len(samples) == 10**4
    cens_ok = cens < 0.05
    ok = res.passed and cens_ok and handled
    report(7, ok, f"P(fail at 1) = {res.detail['empirical']:.4f} vs h(1) = {h1:.4f} "
                  f"(|diff| {res.statistic:.4f} <= 0.01: {res.passed}); censored fraction "
                  f"{cens:.4f} (< 0.05: {cens_ok}; theory h(1/sqrt(20)) = "
                  f"{A.failure_prob_dyadic(1 / math.sqrt(20)):.4f})", elapsed, None)
    assert res.passed and handled
    assert cens_ok, f"censored fraction {cens:.4f} is not below 0.05 at horizon 20"


def test_criterion_08_dyadic_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    eq3_bad = eq4_bad = 0
    worst = 0.0
    for i in range(10**4):
        ctx = D.new_context(np.random.SeedSequence([8, i]), alpha_range=(-1.0, 1.0))
        alpha = float(rng.integers(-2**20, 2**20)) / 2**20
        if not np.array_equal(D.floor_index_matrix(ctx, [alpha]), D.suffix_index_matrix(ctx, [alpha])):
            eq3_bad += 1
        err = abs(D.reconstruct_alpha(ctx, alpha) - alpha)
        worst = max(worst, err / 2.0 ** (ctx.j_min + ctx.theta))
        if err > 2.0 ** (ctx.j_min + ctx.theta):
            eq4_bad += 1
    elapsed = time.perf_counter() - t0
    ok = eq3_bad == 0 and eq4_bad == 0
    within = report(8, ok, f"floor/suffix index mismatches {eq3_bad}, reconstruction misses {eq4_bad} "
                           f"(worst error / 2^(j_min+theta) = {worst:.3f}) over 1e4 contexts", elapsed, 10)
    assert ok and within


def test_criterion_09_concavity_subadditivity():
    t0 = time.perf_counter()
    grid = np.round(np.arange(1, 201) * 0.05, 12)
    conc = A.concavity_check(grid)
    rng = np.random.default_rng(9)
    pairs = rng.uniform(0.0, 10.0, size=(1000, 2))
    gaps = A.subadditivity_gaps(pairs)
    elapsed = time.perf_counter() - t0
    ok = conc.concave and bool(np.all(gaps >= -1e-12))
    within = report(9, ok, f"max second difference {conc.second_differences.max():.2e} <= {conc.tolerance:.0e}; "
                           f"min subadditivity gap {gaps.min():.2e} over 1e3 pairs", elapsed, 30)
    assert ok and within


def test_criterion_10_log_z_identity():
    t0 = time.perf_counter()
    errs, norms = [], []
    for psi in (0.5, 1.0, 2.0, 5.0):
        errs.append(abs(A.expected_log_z(psi) - A.expected_log_z_closed_form(psi)))
        norms.append(abs(A.expected_over_z(psi, np.ones_like) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and max(norms) <= 1e-10
    within = report(10, ok, f"max |E ln Z - closed form| {max(errs):.1e} (1e-8); "
                            f"max |int density - 1| {max(norms):.1e} (1e-10)", elapsed, 5)
    assert ok and within

"""Closed-form failure probabilities, bounds and the nonexistence inequality.

Everything is expressed through the scale-free argument
``psi = |alpha - beta| / sqrt(s)``.  The failure probability of the dyadic
grand coupling, ``h(psi) = P(coupling time > s)``, is computed along two
independent routes:

* :func:`failure_prob_dyadic` integrates the Bessel(3) sup-CDF against the
  density of ``Z`` after the change of variables ``u = psi / zeta``,
  which turns ``[psi/2, inf)`` into ``(0, 2]`` with the bounded weight
  ``(1/ln 2) * (1/2 if u < 1 else 1/u - 1/2)``;
* :func:`failure_prob_dyadic_series` sums the termwise-integrated
  erf/Ei series.

The two are kept separate on purpose and checked against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .numerics import (DEFAULT_QUAD, DEFAULT_SERIES, QuadratureSpec, SeriesAccuracy,
                       erf, erfc, exp_integral_ei, expand_bracket, integrate,
                       invert_monotone, kolmogorov_sup_cdf, kolmogorov_sup_sf)

LN2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
HEAD_MIN_PSI = 2.0 * SQRT2
# sup levels z at which the sup-CDF changes shape; mapped to u = psi / z
_Z_KNOTS = (0.12, 0.2, 0.3, 0.45, 0.7, 1.0, 1.5, 2.2, 3.5, 6.0)

FORMULAS = ("dyadic", "reflection", "web")


def _check_psi(psi):
    if not psi >= 0 or math.isinf(psi):
        raise ValueError(f"psi must be a finite nonnegative number, got {psi!r}")
    return float(psi)


# ---------------------------------------------------------------------------
# the random level Z


def z_tail(psi, zeta):
    """``P(Z >= zeta) = int_0^1 min(2**-theta * psi / zeta, 1) dtheta``."""
    psi = _check_psi(psi)
    zeta = np.asarray(zeta, dtype=float)
    r = psi / zeta
    mid = np.clip(r, 1.0, 2.0)
    out = np.where(r <= 1.0, r / (2.0 * LN2),
                   np.where(r >= 2.0, 1.0, np.log2(mid) + (1.0 - mid / 2.0) / LN2))
    return float(out) if out.ndim == 0 else out


def z_density(psi, zeta):
    """``zeta**-2 psi / ln2 * (min(zeta/psi, 1) - 1/2)`` on ``[psi/2, inf)``, else 0."""
    psi = _check_psi(psi)
    zeta = np.asarray(zeta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = psi / (zeta * zeta * LN2) * (np.minimum(zeta / psi, 1.0) - 0.5)
    out = np.where(zeta >= psi / 2.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def expected_over_z(psi, g: Callable, spec: QuadratureSpec = DEFAULT_QUAD):
    """``E[g(Z)]`` by quadrature against :func:`z_density` on ``[psi/2, inf)``."""
    psi = _check_psi(psi)
    if psi == 0:
        raise ValueError("Z is degenerate at psi = 0")
    return integrate(lambda z: g(z) * z_density(psi, z), (psi / 2.0, math.inf), spec,
                     points=(psi, 2.0 * psi, 8.0 * psi))


def expected_log_z(psi, spec: QuadratureSpec = DEFAULT_QUAD):
    return expected_over_z(psi, np.log, spec)


def expected_log_z_closed_form(psi):
    return math.log(psi) - LN2 / 2.0 + 1.0


# ---------------------------------------------------------------------------
# dyadic failure probability: quadrature route


def _u_weighted_integral(psi, fn, spec):
    """``(1/ln2) [int_0^1 fn(psi/u)/2 du + int_1^2 fn(psi/u)(1/u - 1/2) du]``."""
    knots = [psi / z for z in _Z_KNOTS]
    lower = integrate(lambda u: 0.5 * fn(psi / u), (0.0, 1.0), spec,
                      points=[k for k in knots if 0 < k < 1])
    upper = integrate(lambda u: fn(psi / u) * (1.0 / u - 0.5), (1.0, 2.0), spec,
                      points=[k for k in knots if 1 < k < 2])
    return (lower + upper) / LN2


def failure_prob_dyadic(psi, spec: QuadratureSpec = DEFAULT_QUAD,
                        acc: SeriesAccuracy = DEFAULT_SERIES) -> float:
    """``h(psi) = int_{psi/2}^inf K(zeta) f_Z(zeta) dzeta`` by adaptive quadrature.

    ``K`` is the Bessel(3) sup-CDF on the unit interval and ``f_Z`` the
    density of the scaled disagreement level.
    """
    psi = _check_psi(psi)
    if psi == 0:
        return 0.0
    val = _u_weighted_integral(psi, lambda z: kolmogorov_sup_cdf(z, acc), spec)
    return min(max(val, 0.0), 1.0)


def coupling_prob_dyadic(psi, spec: QuadratureSpec = DEFAULT_QUAD,
                         acc: SeriesAccuracy = DEFAULT_SERIES) -> float:
    """``1 - h(psi)`` integrated directly, accurate when ``h`` is close to 1."""
    psi = _check_psi(psi)
    if psi == 0:
        return 1.0
    val = _u_weighted_integral(psi, lambda z: kolmogorov_sup_sf(z, acc), spec)
    return min(max(val, 0.0), 1.0)


# ---------------------------------------------------------------------------
# dyadic failure probability: erf / Ei series route


def failure_prob_dyadic_series(psi, acc: SeriesAccuracy = DEFAULT_SERIES) -> float:
    """The termwise-integrated series for ``h(psi)``.

    With ``x_k = pi k / (sqrt(2) psi)`` the k-th term is
    ``psi/(sqrt(2 pi) k) * (2 erf(x_k) - erf(2 x_k)) - Ei(-x_k**2) + Ei(-4 x_k**2)``
    and ``h = (1/ln2) sum_k (-1)**(k+1) term_k``.  Writing
    ``2 erf(x) - erf(2x) = 1 - 2 erfc(x) + erfc(2x)`` splits off the
    alternating harmonic part, which sums to ``psi ln2 / sqrt(2 pi)`` exactly;
    the remainder decays like ``exp(-x_k**2)`` and is truncated once
    ``x_k > 2`` and its terms fall below ``acc.abs_tol``.
    """
    psi = _check_psi(psi)
    if psi == 0:
        return 0.0
    x_stop = math.sqrt(-math.log(acc.abs_tol)) + 1.0
    n = int(math.ceil(x_stop * SQRT2 * psi / math.pi)) + 3
    n = max(3, min(n, acc.max_terms))
    k = np.arange(1, n + 1, dtype=float)
    x = math.pi * k / (SQRT2 * psi)
    g = (psi / (SQRT_2PI * k) * (erfc(2.0 * x) - 2.0 * erfc(x))
         + exp_integral_ei(-4.0 * x * x) - exp_integral_ei(-x * x))
    signs = np.where(k % 2 == 1, 1.0, -1.0)
    keep = ~((x > 2.0) & (np.abs(g) < acc.abs_tol))
    keep[:3] = True
    # everything after the first dropped term is dropped as well
    if not keep.all():
        keep[np.argmin(keep):] = False
    corr = math.fsum(signs[keep] * g[keep])
    val = psi / SQRT_2PI + corr / LN2
    return min(max(val, 0.0), 1.0)


class FailureProbInterpolant:
    """Cubic spline of ``h`` in ``log psi`` for bulk evaluation.

    Below ``lo`` the exact small-argument form ``psi / sqrt(2 pi)`` is used
    (the neglected terms are of order ``exp(-pi**2 / (2 psi**2))``); above
    ``hi`` the value is 1 to double precision.  :meth:`max_error` reports the
    deviation from direct quadrature at the midpoints between knots.
    """

    _cache = None

    def __init__(self, lo=0.05, hi=40.0, knots=3000, spec: QuadratureSpec = DEFAULT_QUAD):
        self.lo, self.hi = lo, hi
        self.spec = spec
        self.log_psi = np.linspace(math.log(lo), math.log(hi), knots)
        vals = np.array([failure_prob_dyadic(math.exp(v), spec) for v in self.log_psi])
        self._spline = CubicSpline(self.log_psi, vals)

    @classmethod
    def default(cls):
        if cls._cache is None:
            cls._cache = cls()
        return cls._cache

    def __call__(self, psi):
        psi = np.asarray(psi, dtype=float)
        with np.errstate(divide="ignore"):
            mid = self._spline(np.log(np.clip(psi, self.lo, self.hi)))
        out = np.where(psi < self.lo, psi / SQRT_2PI, np.where(psi > self.hi, 1.0, mid))
        return np.clip(out, 0.0, 1.0)

    def max_error(self):
        mids = 0.5 * (self.log_psi[1:] + self.log_psi[:-1])
        direct = np.array([failure_prob_dyadic(math.exp(v), self.spec) for v in mids])
        return float(np.max(np.abs(self(np.exp(mids)) - direct)))


# ---------------------------------------------------------------------------
# baselines and bounds


def failure_prob_reflection(psi):
    """Maximal (reflection) coupling: ``erf(psi / (2 sqrt 2))``."""
    return erf(np.asarray(psi, dtype=float) / (2.0 * SQRT2)) if np.ndim(psi) else \
        erf(_check_psi(psi) / (2.0 * SQRT2))


def failure_prob_brownian_web(psi):
    """Pairwise Brownian web (independent until meeting): ``erf(psi / 2)``."""
    return erf(np.asarray(psi, dtype=float) / 2.0) if np.ndim(psi) else erf(_check_psi(psi) / 2.0)


def bound_tail(psi):
    return _check_psi(psi) / SQRT_2PI


def bound_uniform(psi):
    return erf(math.e * _check_psi(psi) / 2.0)


class HeadBound(NamedTuple):
    value: float
    valid: bool


def _head_bound_delta(psi, delta):
    """Head bound for a free ``1 < delta <= 2``.

    ``1 - (1 - erf(psi delta / (2 sqrt 2))**3) (ln delta + 1/delta - 1) / ln 2``
    """
    if not 1.0 < delta <= 2.0:
        raise ValueError("delta must lie in (1, 2]")
    e3 = erf(psi * delta / (2.0 * SQRT2)) ** 3
    return 1.0 - (1.0 - e3) * (math.log(delta) + 1.0 / delta - 1.0) / LN2


def bound_head(psi) -> HeadBound:
    """Small-time bound, valid for ``psi >= 2 sqrt 2`` (``delta = 1 + 8/psi**2``)."""
    psi = _check_psi(psi)
    if psi == 0:
        return HeadBound(1.0, False)
    d = 1.0 + 8.0 / (psi * psi)
    e3 = erf((psi + 8.0 / psi) / (2.0 * SQRT2)) ** 3
    # -expm1(-e3 ...) form is not needed; the factor below is O(psi**-4)
    factor = (math.log1p(8.0 / (psi * psi)) + 1.0 / d - 1.0) / LN2
    return HeadBound(1.0 - (1.0 - e3) * factor, psi >= HEAD_MIN_PSI)


def best_bound(psi):
    """Smallest applicable upper bound on ``h(psi)`` (capped at 1)."""
    b = min(bound_tail(psi), bound_uniform(psi), 1.0)
    hb = bound_head(psi)
    if hb.valid:
        b = min(b, hb.value)
    return b


@dataclass(frozen=True)
class BoundReport:
    psi_grid: np.ndarray
    h_exact: np.ndarray
    lower_reflection: np.ndarray
    bound_tail: np.ndarray
    bound_head: np.ndarray
    bound_head_valid: np.ndarray
    bound_uniform: np.ndarray

    def sandwich_ok(self, slack=1e-9):
        upper = np.minimum(self.bound_tail, self.bound_uniform)
        upper = np.where(self.bound_head_valid, np.minimum(upper, self.bound_head), upper)
        return (self.lower_reflection <= self.h_exact + slack) & (self.h_exact <= upper + slack)


def bound_report(psi_grid, spec: QuadratureSpec = DEFAULT_QUAD) -> BoundReport:
    psi_grid = np.asarray(psi_grid, dtype=float)
    heads = [bound_head(p) for p in psi_grid]
    return BoundReport(
        psi_grid=psi_grid,
        h_exact=np.array([failure_prob_dyadic(p, spec) for p in psi_grid]),
        lower_reflection=np.array([failure_prob_reflection(p) for p in psi_grid]),
        bound_tail=np.array([bound_tail(p) for p in psi_grid]),
        bound_head=np.array([h.value for h in heads]),
        bound_head_valid=np.array([h.valid for h in heads]),
        bound_uniform=np.array([bound_uniform(p) for p in psi_grid]),
    )


# ---------------------------------------------------------------------------
# inverse distribution functions


def coupled_prob(formula, psi, spec: QuadratureSpec = DEFAULT_QUAD):
    """``P(coupling time <= s)`` as a function of ``psi``, for one of FORMULAS."""
    if formula == "dyadic":
        if psi > 1.5:
            return coupling_prob_dyadic(psi, spec)
        return 1.0 - failure_prob_dyadic(psi, spec)
    if formula == "reflection":
        return erfc(psi / (2.0 * SQRT2))
    if formula == "web":
        return erfc(psi / 2.0)
    if formula == "bound":
        return 1.0 - bound_envelope(psi)
    raise ValueError(f"unknown formula {formula!r}")


def bound_envelope(psi):
    """Nonincreasing-in-time version of :func:`best_bound`.

    The head bound switches on at ``psi = 2 sqrt 2``, which makes
    ``best_bound`` jump down there.  A failure probability can only fall as
    time grows (``psi`` falls), so below the switch the head bound at the
    switch point is still a valid ceiling.
    """
    b = best_bound(psi)
    if psi < HEAD_MIN_PSI:
        b = min(b, bound_head(HEAD_MIN_PSI).value)
    return b


def failure_prob(formula, psi, spec: QuadratureSpec = DEFAULT_QUAD):
    """``P(coupling time > s)`` as a function of ``psi``, for one of FORMULAS."""
    if formula == "dyadic":
        return failure_prob_dyadic(psi, spec)
    if formula == "reflection":
        return erf(psi / (2.0 * SQRT2))
    if formula == "web":
        return erf(psi / 2.0)
    if formula == "bound":
        return bound_envelope(psi)
    raise ValueError(f"unknown formula {formula!r}")


def inverse_failure_time(formula, distance, p, spec: QuadratureSpec = DEFAULT_QUAD,
                         ftol=1e-10, xtol_rel=1e-12) -> float:
    """Time ``s`` with ``P(coupling time <= s) = p`` for starts ``distance`` apart.

    Bisection in ``log s``.  For ``p <= 1/2`` the equation is
    ``coupled_prob(distance / sqrt(s)) = p``; above 1/2 it is solved as
    ``failure_prob(distance / sqrt(s)) = 1 - p`` so that the small side keeps
    its relative precision.  The initial bracket scales with ``distance**2``
    so the result inherits the exact Brownian scaling of the inputs.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if not distance > 0:
        raise ValueError("distance must be positive")
    d2 = distance * distance

    if p <= 0.5:
        target = p

        def F(s):
            return coupled_prob(formula, distance / math.sqrt(s), spec)
    else:
        # failure probability falls with s; negate to get a nondecreasing map
        target = -(1.0 - p)

        def F(s):
            return -failure_prob(formula, distance / math.sqrt(s), spec)

    lo, hi = expand_bracket(F, target, 0.01 * d2, 10.0 * d2)
    return invert_monotone(F, target, (lo, hi), ftol=ftol, xtol_rel=xtol_rel, log_scale=True)


@dataclass(frozen=True)
class RatioCurve:
    p_grid: np.ndarray
    ratio: np.ndarray
    ratio_web: np.ndarray
    ratio_bound: np.ndarray | None = None


def ratio_curve(p_grid, spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-300),
                with_bound=False) -> RatioCurve:
    """``F_dyadic^-1(p) / F_reflection^-1(p)`` at unit distance.

    The inverses are solved to relative bracket width 1e-14 with no
    function-value early exit, because the ratio approaches 1 at both ends.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    ratio, web, bnd = [], [], []
    for p in p_grid:
        def inv(formula):
            return inverse_failure_time(formula, 1.0, p, spec, ftol=0.0, xtol_rel=1e-14)

        ref = inv("reflection")
        ratio.append(inv("dyadic") / ref)
        web.append(inv("web") / ref)
        if with_bound:
            bnd.append(inv("bound") / ref)
    return RatioCurve(p_grid, np.array(ratio), np.array(web),
                      np.array(bnd) if with_bound else None)


def gap_function_r(t, spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-300)):
    """``r(t) = F_dyadic^-1(F_reflection(t)) / t`` at unit distance."""
    if not t > 0:
        raise ValueError("t must be positive")
    p = erfc(1.0 / (2.0 * math.sqrt(2.0 * t)))
    if not 0.0 < p < 1.0:
        raise ValueError(f"F_reflection({t}) = {p} is not representable strictly inside (0, 1)")
    return inverse_failure_time("dyadic", 1.0, p, spec, ftol=0.0) / t


# ---------------------------------------------------------------------------
# shape of h


@dataclass(frozen=True)
class ConcavityReport:
    psi_grid: np.ndarray
    h: np.ndarray
    second_differences: np.ndarray
    tolerance: float
    concave: bool
    nondecreasing: bool


def concavity_check(psi_grid, spec: QuadratureSpec = DEFAULT_QUAD) -> ConcavityReport:
    psi_grid = np.asarray(psi_grid, dtype=float)
    step = np.diff(psi_grid)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0):
        raise ValueError("concavity_check needs a uniform grid")
    h = np.array([failure_prob_dyadic(p, spec) for p in psi_grid])
    d2 = h[2:] - 2.0 * h[1:-1] + h[:-2]
    tol = 1e-9 + 10.0 * spec.abs_tol
    return ConcavityReport(psi_grid, h, d2, tol, bool(np.all(d2 <= tol)),
                           bool(np.all(np.diff(h) >= -tol)))


def subadditivity_gaps(pairs, spec: QuadratureSpec = DEFAULT_QUAD):
    """``h(a) + h(b) - h(a + b)`` for each pair (nonnegative when subadditive)."""
    return np.array([failure_prob_dyadic(a, spec) + failure_prob_dyadic(b, spec)
                     - failure_prob_dyadic(a + b, spec) for a, b in pairs])


# ---------------------------------------------------------------------------
# necessary condition on any attainable failure probability bound


def thm4_rhs(s, t):
    """``erfc(1/sqrt(2t)) - erfc(1/sqrt(2s)) - erfc(1/(4 sqrt(2(t-s))))``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return (erfc(1.0 / np.sqrt(2.0 * t)) - erfc(1.0 / np.sqrt(2.0 * s))
            - erfc(1.0 / (4.0 * np.sqrt(2.0 * (t - s)))))


def thm4_lhs(h_tilde, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return h_tilde(2.0 / np.sqrt(t)) + h_tilde(2.0 / np.sqrt(s)) + 2.0 * h_tilde(1.0 / np.sqrt(s))


def thm4_deficit(h_tilde: Callable, s, t):
    """LHS - RHS of the necessary inequality; negative means it is violated.

    ``h_tilde(x) = h(x) - erf(x / (2 sqrt 2))`` is the excess of a candidate
    failure probability bound over the reflection coupling.  Vectorised over
    ``s`` and ``t`` if ``h_tilde`` is.
    """
    s_arr, t_arr = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    if np.any(~(s_arr > 0)) or np.any(~(t_arr > s_arr)):
        raise ValueError("need 0 < s < t")
    out = thm4_lhs(h_tilde, s_arr, t_arr) - thm4_rhs(s_arr, t_arr)
    return float(out) if np.ndim(out) == 0 else out


def h_tilde_for_gap(c):
    """Excess of ``erf(x sqrt(c) / (2 sqrt 2))`` over the reflection coupling."""
    rc = math.sqrt(c)

    def h_tilde(x):
        x = np.asarray(x, dtype=float)
        return erf(x * rc / (2.0 * SQRT2)) - erf(x / (2.0 * SQRT2))

    return h_tilde


def h_tilde_dyadic(spec: QuadratureSpec = DEFAULT_QUAD):
    """Excess of the dyadic failure probability over the reflection coupling."""

    def h_tilde(x):
        x = np.asarray(x, dtype=float)
        # scan grids repeat arguments heavily; evaluate each distinct one once
        uniq, inv = np.unique(x.ravel(), return_inverse=True)
        vals = np.array([failure_prob_dyadic(v, spec) for v in uniq])
        vals = vals - erf(uniq / (2.0 * SQRT2))
        return vals[inv].reshape(x.shape)

    return h_tilde


DEFAULT_S_GRID = np.round(np.arange(0.05, 1.0 + 1e-12, 0.0005), 10)
DEFAULT_GAPS = np.round(np.arange(0.0005, 0.05 + 1e-12, 0.0001), 10)


@dataclass(frozen=True)
class AttainabilityVerdict:
    c: float | None
    attainable_not_excluded: bool
    min_deficit: float
    witness_s: float
    witness_t: float

    def to_record(self):
        return {"c": self.c, "verdict": "not excluded" if self.attainable_not_excluded
                else "not attainable", "min_deficit": self.min_deficit,
                "witness": {"s": self.witness_s, "t": self.witness_t}}


def gap_attainability_scan(c=None, s_grid=None, gaps=None, h_tilde=None) -> AttainabilityVerdict:
    """Most negative deficit over pairs ``(s, t = s + gap)``.

    Pass ``c`` to test the multiplicative gap ``c``, or ``h_tilde`` directly.
    A negative minimum certifies that the candidate bound is not attainable.
    """
    if h_tilde is None:
        if c is None:
            raise ValueError("need c or h_tilde")
        if c < 1:
            raise ValueError("c must be at least 1")
        h_tilde = h_tilde_for_gap(c)
    s_grid = DEFAULT_S_GRID if s_grid is None else np.asarray(s_grid, dtype=float)
    gaps = DEFAULT_GAPS if gaps is None else np.asarray(gaps, dtype=float)
    S, D = np.meshgrid(s_grid, gaps, indexing="ij")
    T = S + D
    deficit = thm4_deficit(h_tilde, S, T)
    k = np.unravel_index(np.argmin(deficit), deficit.shape)
    m = float(deficit[k])
    return AttainabilityVerdict(c=c, attainable_not_excluded=m >= 0.0, min_deficit=m,
                                witness_s=float(S[k]), witness_t=float(T[k]))

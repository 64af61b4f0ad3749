"""Sampling the coupling time and comparing empirical with analytic laws.

Two samplers produce the coupling time of a pair at distance ``d``:

* :func:`sample_upsilon_exact` uses the representation
  ``Upsilon = 2**(2(K + Theta)) * T1``: the disagreement level ``K`` given
  ``Theta`` has the explicit tail ``min(2**-(l+theta) d, 1)`` and ``T1`` is
  the level-one hitting time of a Bessel(3) from 0.  No time discretisation.
* :func:`sample_upsilon_pathsim` runs the construction end to end: a sign
  context, the disagreement level read off it, and a discretised Bessel(3)
  driver run until it reaches ``2**(K + Theta)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .analytics import FailureProbInterpolant, z_tail
from .dyadic_core import disagreement_level, new_context
from .numerics import DEFAULT_SERIES, SeriesAccuracy, kolmogorov_sup_sf

METHODS = ("exact", "path_sim")
KS_C_001 = 1.63  # asymptotic one-sample KS critical constant at level 0.01


@dataclass(frozen=True)
class CouplingTimeSamples:
    """Column-oriented batch of coupling-time samples.

    ``theta``, ``level`` and ``t1`` keep the ingredients of each draw when the
    sampler knows them (NaN / sentinel otherwise).
    """

    value: np.ndarray
    censored: np.ndarray
    method: str
    distance: float
    theta: np.ndarray | None = None
    level: np.ndarray | None = None
    t1: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if np.any(self.value < 0):
            raise ValueError("coupling times are nonnegative")
        if self.method == "exact" and np.any(self.censored):
            raise ValueError("exact samples are never censored")

    def __len__(self):
        return self.value.size

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "censored", "method"])
            for v, c in zip(self.value, self.censored):
                w.writerow([f"{v:.17g}", int(c), self.method])

    @classmethod
    def from_csv(cls, path, distance=float("nan")):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        methods = {r["method"] for r in rows}
        if len(methods) != 1:
            raise ValueError("a sample file holds a single method")
        return cls(value=np.array([float(r["value"]) for r in rows]),
                   censored=np.array([r["censored"] == "1" for r in rows]),
                   method=methods.pop(), distance=distance)


def _seed_seq(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_upsilon_exact(rng_seed, psi, n, acc: SeriesAccuracy = DEFAULT_SERIES) -> CouplingTimeSamples:
    """``n`` exact draws of the coupling time of two starts ``psi`` apart.

    With unit time ``P(Upsilon > s) = h(psi / sqrt(s))``.  Theta, the level
    uniform and the T1 uniform are drawn as three consecutive blocks of one
    generator, so a seed fixes the whole batch.
    """
    if not psi > 0:
        raise ValueError("psi must be positive")
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(_seed_seq(rng_seed))
    theta = rng.random(n)
    u_level = 1.0 - rng.random(n)  # in (0, 1]
    u_t1 = rng.random(n)
    # P(K >= l | theta) = min(2**-(l+theta) psi, 1)  =>  K = floor(log2(psi / U) - theta)
    level = np.floor(np.log2(psi / u_level) - theta).astype(np.int64)
    t1 = kernels.invert_t1_cdf(u_t1, acc.abs_tol, acc.max_terms)
    value = np.exp2(2.0 * (level + theta)) * t1
    return CouplingTimeSamples(value=value, censored=np.zeros(n, dtype=bool), method="exact",
                               distance=float(psi), theta=theta, level=level, t1=t1)


def _bes3_hitting_time(rng, level, dt, max_steps, chunk0=1024, chunk_max=65536):
    """First time a discretised BES3(0) reaches ``level``; None if not by max_steps."""
    pos = np.zeros(3)
    done = 0
    chunk = chunk0
    sd = math.sqrt(dt)
    while done < max_steps:
        m = min(chunk, max_steps - done)
        incr = rng.standard_normal((m, 3)) * sd
        k, frac = kernels.scan_first_passage(pos, incr, level)
        if k >= 0:
            return (done + k + frac) * dt
        done += m
        chunk = min(2 * chunk, chunk_max)
    return None


def sample_upsilon_pathsim(rng_seed, alpha, beta, dt=1e-4, horizon=20.0, n=1, j_min=-30):
    """End-to-end coupling times from sampled contexts and simulated drivers.

    Each draw gets its own child seed (``spawn_key = (i,)``) split into a
    context seed and a driver seed, so draw ``i`` does not depend on ``n``.
    Draws whose driver does not reach ``2**(K+Theta)`` by ``horizon`` are
    returned censored with value ``horizon``.  Hitting times are linearly
    interpolated between grid points.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (dt > 0 and horizon > 0):
        raise ValueError("dt and horizon must be positive")
    root = _seed_seq(rng_seed)
    value = np.zeros(n)
    censored = np.zeros(n, dtype=bool)
    theta = np.full(n, np.nan)
    level = np.full(n, j_min - 1, dtype=np.int64)
    max_steps = int(math.ceil(horizon / dt - 1e-9))
    lo, hi = min(alpha, beta), max(alpha, beta)
    for i in range(n):
        child = np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,))
        ctx_seed, drv_seed = child.spawn(2)
        ctx = new_context(ctx_seed, j_min=j_min, alpha_range=(lo, hi))
        theta[i] = ctx.theta
        rec = disagreement_level(ctx, alpha, beta)
        if rec.level is None:
            continue
        level[i] = rec.level
        tau = _bes3_hitting_time(np.random.default_rng(drv_seed),
                                 2.0 ** (rec.level + ctx.theta), dt, max_steps)
        if tau is None or tau > horizon:
            value[i], censored[i] = horizon, True
        else:
            value[i] = tau
    return CouplingTimeSamples(value=value, censored=censored, method="path_sim",
                               distance=abs(beta - alpha), theta=theta, level=level)


# ---------------------------------------------------------------------------
# empirical distribution functions


@dataclass(frozen=True)
class CdfTable:
    """Right-continuous step CDF; trustworthy only for ``s < valid_below``."""

    s: np.ndarray
    p: np.ndarray
    sample_count: int
    method: str
    valid_below: float = math.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.s, x, side="right")
        return np.where(k > 0, self.p[np.maximum(k - 1, 0)], 0.0)

    @property
    def points(self):
        return list(zip(self.s.tolist(), self.p.tolist()))


def empirical_cdf(samples: CouplingTimeSamples) -> CdfTable:
    """Step CDF over all ``n`` draws; censored draws only lower the mass.

    A draw censored at ``c`` is known to exceed ``c``, so it counts in the
    denominator and the table is valid below the smallest censoring point.
    """
    n = len(samples)
    obs = samples.value[~samples.censored]
    if obs.size == 0:
        raise ValueError("empirical_cdf needs at least one uncensored sample")
    cens = samples.value[samples.censored]
    valid_below = float(cens.min()) if cens.size else math.inf
    s, counts = np.unique(obs, return_counts=True)
    return CdfTable(s=s, p=np.cumsum(counts) / n, sample_count=n, method=samples.method,
                    valid_below=valid_below)


def ks_distance(a: CdfTable, b) -> float:
    """Sup-norm distance between a table and an analytic CDF or another table.

    The supremum is restricted to ``s`` below both tables' ``valid_below``.
    """
    limit = a.valid_below
    if isinstance(b, CdfTable):
        limit = min(limit, b.valid_below)
        x = np.union1d(a.s, b.s)
        x = x[x < limit]
        if x.size == 0:
            return 0.0
        return float(np.max(np.abs(a(x) - b(x))))
    keep = a.s < limit
    x = a.s[keep]
    right = a.p[keep]
    left = np.concatenate([[0.0], a.p[:-1]])[keep]
    F = np.asarray(b(x), dtype=float)
    return float(max(np.max(np.abs(right - F), initial=0.0), np.max(np.abs(F - left), initial=0.0)))


def ks_threshold(n, m=None, c=KS_C_001):
    """Asymptotic KS critical distance (one sample, or two samples of sizes n, m)."""
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


def analytic_cdf(distance, interpolant: FailureProbInterpolant | None = None) -> Callable:
    """``s -> 1 - h(distance / sqrt(s))`` through a validated interpolant of ``h``."""
    interp = interpolant or FailureProbInterpolant.default()

    def F(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 - interp(distance / np.sqrt(s))

    return F


def t1_cdf(s, acc: SeriesAccuracy = DEFAULT_SERIES):
    """``P(T1 <= s)`` for the level-one hitting time of BES3(0)."""
    s = np.asarray(s, dtype=float)
    return kolmogorov_sup_sf(1.0 / np.sqrt(s), acc)


def level_tail(psi, l):
    """``P(K >= l) = int_0^1 min(2**-(l+theta) psi, 1) dtheta``."""
    return z_tail(psi, 2.0 ** l)


# ---------------------------------------------------------------------------
# statistical checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def to_record(self):
        return {"name": self.name, "passed": bool(self.passed), "statistic": self.statistic,
                "threshold": self.threshold, **self.detail}


def check_ks(name, samples, F, c=KS_C_001):
    table = empirical_cdf(samples)
    d = ks_distance(table, F)
    thr = ks_threshold(table.sample_count, c=c)
    return CheckResult(name, d <= thr, d, thr, {"n": table.sample_count})


def check_two_sample(name, a, b, c=KS_C_001):
    ta, tb = empirical_cdf(a), empirical_cdf(b)
    d = ks_distance(ta, tb)
    thr = ks_threshold(ta.sample_count, tb.sample_count, c=c)
    return CheckResult(name, d <= thr, d, thr,
                       {"n": ta.sample_count, "m": tb.sample_count,
                        "valid_below": min(ta.valid_below, tb.valid_below)})


def check_level_marginal(samples: CouplingTimeSamples, psi, sigmas=3.0):
    """Empirical ``P(K >= l)`` against its closed form for every observed ``l``."""
    n = len(samples)
    worst, worst_l = 0.0, None
    for l in range(int(samples.level.min()), int(samples.level.max()) + 1):
        p = level_tail(psi, l)
        emp = float(np.mean(samples.level >= l))
        sd = math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)
        z = abs(emp - p) / sd
        if z > worst:
            worst, worst_l = z, l
    return CheckResult("level_marginal", worst <= sigmas, worst, sigmas, {"worst_level": worst_l})


def check_failure_at(name, samples, s, h_expected, tol):
    """Empirical ``P(Upsilon > s)`` (censored draws count as failures) within ``tol``."""
    emp = float(np.mean(samples.censored | (samples.value > s)))
    err = abs(emp - h_expected)
    return CheckResult(name, err <= tol, err, tol, {"empirical": emp, "expected": h_expected,
                                                    "censored_fraction": float(np.mean(samples.censored))})


def summary_json(results, **extra):
    rec = {**extra, "passed": all(r.passed for r in results),
           "tests": [r.to_record() for r in results]}
    return json.dumps(rec, indent=2, sort_keys=True)

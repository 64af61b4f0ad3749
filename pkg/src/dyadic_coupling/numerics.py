"""Special functions, series, quadrature and root finding.

erf/erfc come from the C library (``math``) for scalars and ``scipy.special``
for arrays; Ei is ``scipy.special.expi`` restricted to negative arguments.
Quadrature is an adaptive 15-point Gauss-Kronrod rule with a vectorised
integrand, which matters because every analytic failure probability is a
one-dimensional integral evaluated thousands of times by the inverse-CDF
routines.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import kernels

__all__ = [
    "SeriesAccuracy",
    "QuadratureSpec",
    "QuadratureError",
    "BracketError",
    "erf",
    "erfc",
    "exp_integral_ei",
    "kolmogorov_sup_cdf",
    "kolmogorov_sup_sf",
    "integrate",
    "invert_monotone",
]


@dataclass(frozen=True)
class SeriesAccuracy:
    """Truncation control for alternating / rapidly decaying series."""

    abs_tol: float = 1e-15
    max_terms: int = 1000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_terms < 3:
            raise ValueError("max_terms must be at least 3")


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


DEFAULT_SERIES = SeriesAccuracy()
DEFAULT_QUAD = QuadratureSpec()


class QuadratureError(ArithmeticError):
    """Adaptive quadrature ran out of subdivisions.

    ``estimate`` and ``error`` carry the best result reached.
    """

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class BracketError(ValueError):
    pass


# ---------------------------------------------------------------------------
# special functions


def erf(x):
    """Error function, ``2/sqrt(pi) * int_0^x exp(-u^2) du``."""
    if np.ndim(x) == 0:
        return math.erf(float(x))
    return special.erf(np.asarray(x, dtype=float))


def erfc(x):
    """Complementary error function without cancellation for large ``x``."""
    if np.ndim(x) == 0:
        return math.erfc(float(x))
    return special.erfc(np.asarray(x, dtype=float))


def exp_integral_ei(x):
    """Exponential integral ``Ei(x)`` for ``x < 0``.

    For negative arguments ``Ei(x) = -E1(-x) = -int_{-x}^inf e^-u / u du``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr < 0)):
        raise ValueError("exp_integral_ei is only defined here for x < 0")
    out = special.expi(arr)
    return float(out) if np.ndim(x) == 0 else out


def kolmogorov_sup_cdf(z, acc: SeriesAccuracy = DEFAULT_SERIES):
    """P(sup_{t<=1} Y_t <= z) for a Bessel(3) process Y started at 0.

    Equal to ``sum_{k>=1} 2(-1)^(k+1) exp(-k^2 pi^2 / (2 z^2))``.  Truncation
    stops once the next term drops below ``acc.abs_tol``.  Large ``z`` uses
    the theta-transformed series of the same function (see
    :mod:`dyadic_coupling.kernels`).  Scalars in, float out.
    """
    out = kernels.ksup_cdf(np.atleast_1d(z), acc.abs_tol, acc.max_terms)
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))


def kolmogorov_sup_sf(z, acc: SeriesAccuracy = DEFAULT_SERIES):
    """``1 - kolmogorov_sup_cdf(z)``, accurate in relative terms for large z."""
    out = kernels.ksup_sf(np.atleast_1d(z), acc.abs_tol, acc.max_terms)
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))


# ---------------------------------------------------------------------------
# adaptive Gauss-Kronrod (7, 15)

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-node layout on [-1, 1]
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_gauss_full = np.zeros(15)
_gauss_full[[1, 3, 5]] = _WG[:3]
_gauss_full[[9, 11, 13]] = _WG[2::-1]
_gauss_full[7] = _WG[3]
GK_GAUSS_WEIGHTS = _gauss_full


def _gk_panels(f, a, b):
    """Apply the 15-point rule to every panel [a_i, b_i] with one call to f."""
    half = 0.5 * (b - a)
    center = 0.5 * (b + a)
    x = center[:, None] + half[:, None] * GK_NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    kron = half * (fx @ GK_KRONROD_WEIGHTS)
    gauss = half * (fx @ GK_GAUSS_WEIGHTS)
    return kron, np.abs(kron - gauss)


def _finite_map(f, a, b):
    """Return (g, lo, hi) so that int_a^b f = int_lo^hi g over a finite range."""
    if math.isinf(a) and a < 0:
        raise ValueError("only [a, inf) semi-infinite domains are supported")
    if not math.isinf(b):
        return f, a, b

    # x = a + t / (1 - t), dx = dt / (1 - t)^2
    def g(t):
        one_m = 1.0 - t
        return f(a + t / one_m) / (one_m * one_m)

    return g, 0.0, 1.0


def integrate(f: Callable, domain: tuple, spec: QuadratureSpec = DEFAULT_QUAD,
              points: Sequence[float] = (), vectorized: bool = True) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``domain = (a, b)``.

    ``b`` may be ``inf``; the tail is folded onto ``[0, 1)`` with
    ``x = a + t/(1-t)``.  ``points`` are interior breakpoints (in the original
    variable) used to seed the subdivision.  Subdivision bisects the panel with
    the largest ``|K15 - G7|`` until the summed error is at most
    ``max(abs_tol, rel_tol * |result|)``.

    Raises :class:`QuadratureError` with the best estimate if the budget of
    ``spec.max_subdivisions`` bisections is exhausted.
    """
    a, b = float(domain[0]), float(domain[1])
    if a == b:
        return 0.0
    if b < a:
        return -integrate(f, (b, a), spec, points, vectorized)
    if not vectorized:
        scalar = f

        def f(x):  # noqa: F811 - vectorising wrapper
            return np.array([scalar(v) for v in x], dtype=float)

    g, lo, hi = _finite_map(f, a, b)
    cuts = [p for p in sorted(points) if a < p < b]
    if math.isinf(b):
        cuts = [(p - a) / (1.0 + p - a) for p in cuts]
    edges = np.array([lo, *cuts, hi], dtype=float)

    val, err = _gk_panels(g, edges[:-1], edges[1:])
    heap = [(-e, l, r, v) for e, l, r, v in zip(err, edges[:-1], edges[1:], val)]
    heapq.heapify(heap)
    total, total_err = float(val.sum()), float(err.sum())
    splits = 0
    while total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if splits >= spec.max_subdivisions:
            raise QuadratureError("integrate: subdivision limit reached", total, total_err)
        # bisect a batch of the worst panels at once to amortise the f-call
        batch = [heapq.heappop(heap) for _ in range(min(len(heap), 8))]
        left = np.array([p[1] for p in batch])
        right = np.array([p[2] for p in batch])
        mid = 0.5 * (left + right)
        v, e = _gk_panels(g, np.concatenate([left, mid]), np.concatenate([mid, right]))
        n = len(batch)
        for i, p in enumerate(batch):
            total -= p[3]
            total_err += p[0]
            for j, (l, r) in ((i, (left[i], mid[i])), (i + n, (mid[i], right[i]))):
                total += v[j]
                total_err += e[j]
                heapq.heappush(heap, (-e[j], l, r, v[j]))
        splits += n
        if not heap:
            break
    return float(sum(p[3] for p in heap))


# ---------------------------------------------------------------------------
# root finding


def invert_monotone(F: Callable[[float], float], p: float, bracket: tuple,
                    ftol: float = 1e-10, xtol_rel: float = 1e-12,
                    max_iter: int = 400, log_scale: bool = False) -> float:
    """Smallest-width bisection solve of ``F(s) = p`` for nondecreasing ``F``.

    Stops when ``|F(s) - p| <= ftol`` or the bracket width is at most
    ``xtol_rel * |s|``.  With ``log_scale`` the midpoint is geometric (the
    bracket must then be positive).  If ``p`` equals ``F`` at an endpoint the
    endpoint is returned.

    Raises :class:`BracketError` if ``F(lo) <= p <= F(hi)`` fails.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo <= hi:
        raise BracketError(f"invalid bracket ({lo}, {hi})")
    f_lo, f_hi = F(lo), F(hi)
    if not f_lo <= p <= f_hi:
        raise BracketError(f"bracket [{lo}, {hi}] maps to [{f_lo}, {f_hi}], which misses p={p}")
    if f_lo == p:
        return lo
    if f_hi == p:
        return hi
    if log_scale and lo <= 0:
        raise BracketError("log-scale bisection needs a positive bracket")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi) if log_scale else 0.5 * (lo + hi)
        f_mid = F(mid)
        if abs(f_mid - p) <= ftol:
            return mid
        if f_mid < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol_rel * abs(mid):
            break
    return math.sqrt(lo * hi) if log_scale else 0.5 * (lo + hi)


def expand_bracket(F: Callable[[float], float], p: float, lo: float, hi: float,
                   factor: float = 4.0, max_steps: int = 200) -> tuple:
    """Grow a positive bracket geometrically until ``F(lo) <= p <= F(hi)``."""
    for _ in range(max_steps):
        if F(lo) <= p:
            break
        lo /= factor
    else:
        raise BracketError(f"could not bracket p={p} from below")
    for _ in range(max_steps):
        if F(hi) >= p:
            break
        hi *= factor
    else:
        raise BracketError(f"could not bracket p={p} from above")
    return lo, hi

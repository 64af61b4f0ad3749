"""Hot numeric kernels, each in a numba loop flavour and a numpy flavour.

The public names at the bottom of the module (``ksup_cdf``, ``ksup_sf``,
``invert_t1_cdf``, ``scan_first_passage``, ``first_crossings``,
``level_hitting_times``, ``dyadic_path_values``) dispatch on
:data:`dyadic_coupling._accel.USE_NUMBA`.  Both flavours take and return
plain numpy arrays and are tested against each other.

Series conventions
------------------
For ``z <= Z_SWITCH`` the sup-CDF of a Bessel(3) process on ``[0, 1]`` is
summed directly, ``sum_k 2(-1)^(k+1) exp(-k^2 pi^2 / (2 z^2))``.  Above the
switch the theta-transformed form of the same function is used for the
complement, ``2 sqrt(2/pi) z sum_{n>=0} exp(-2 z^2 (n + 1/2)^2)``, which keeps
relative accuracy when the CDF is close to one.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

Z_SWITCH = 1.2
_PI2_HALF = math.pi * math.pi / 2.0
_SF_PREFACTOR = 2.0 * math.sqrt(2.0 / math.pi)

# bisection for the level-one hitting time of BES3(0) runs in log(s)
T1_LO = 1e-2
T1_HI = 10.0
T1_REL_WIDTH = 1e-13
T1_MAX_ITER = 200


# ---------------------------------------------------------------------------
# Bessel(3) sup distribution


@njit(cache=True)
def _cdf_direct_nb(z, tol, max_terms):
    a = _PI2_HALF / (z * z)
    total = 0.0
    sign = 1.0
    k = 1
    while k <= max_terms:
        term = 2.0 * math.exp(-a * k * k)
        total += sign * term
        sign = -sign
        nxt = 2.0 * math.exp(-a * (k + 1) * (k + 1))
        if k >= 3 and nxt < tol:
            break
        k += 1
    return total


@njit(cache=True)
def _sf_theta_nb(z, tol, max_terms):
    z2 = 2.0 * z * z
    pre = _SF_PREFACTOR * z
    total = 0.0
    n = 0
    while n < max_terms:
        h = n + 0.5
        term = pre * math.exp(-z2 * h * h)
        total += term
        nh = n + 1.5
        if n >= 2 and pre * math.exp(-z2 * nh * nh) < tol:
            break
        n += 1
    return total


@njit(cache=True)
def _ksup_cdf_scalar_nb(z, tol, max_terms):
    if z <= 0.0:
        return 0.0
    if z <= Z_SWITCH:
        v = _cdf_direct_nb(z, tol, max_terms)
    else:
        v = 1.0 - _sf_theta_nb(z, tol, max_terms)
    return min(max(v, 0.0), 1.0)


@njit(cache=True)
def _ksup_sf_scalar_nb(z, tol, max_terms):
    if z <= 0.0:
        return 1.0
    if z <= Z_SWITCH:
        v = 1.0 - _cdf_direct_nb(z, tol, max_terms)
    else:
        v = _sf_theta_nb(z, tol, max_terms)
    return min(max(v, 0.0), 1.0)


@njit(cache=True)
def _ksup_cdf_nb(z, tol, max_terms):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _ksup_cdf_scalar_nb(z[i], tol, max_terms)
    return out


@njit(cache=True)
def _ksup_sf_nb(z, tol, max_terms):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _ksup_sf_scalar_nb(z[i], tol, max_terms)
    return out


def _cdf_direct_np(z, tol, max_terms):
    a = _PI2_HALF / (z * z)
    total = np.zeros_like(z)
    active = np.ones(z.shape, dtype=bool)
    sign = 1.0
    for k in range(1, max_terms + 1):
        term = 2.0 * np.exp(-a * k * k)
        total += np.where(active, sign * term, 0.0)
        sign = -sign
        if k >= 3:
            active &= 2.0 * np.exp(-a * (k + 1) * (k + 1)) >= tol
            if not active.any():
                break
    return total


def _sf_theta_np(z, tol, max_terms):
    z2 = 2.0 * z * z
    pre = _SF_PREFACTOR * z
    total = np.zeros_like(z)
    active = np.ones(z.shape, dtype=bool)
    for n in range(max_terms):
        h = n + 0.5
        total += np.where(active, pre * np.exp(-z2 * h * h), 0.0)
        if n >= 2:
            nh = n + 1.5
            active &= pre * np.exp(-z2 * nh * nh) >= tol
            if not active.any():
                break
    return total


def _ksup_split(z):
    z = np.asarray(z, dtype=float)
    pos = z > 0.0
    low = pos & (z <= Z_SWITCH)
    high = z > Z_SWITCH
    return z, pos, low, high


def _ksup_cdf_np(z, tol, max_terms):
    z, pos, low, high = _ksup_split(z)
    out = np.zeros(z.shape)
    if low.any():
        out[low] = _cdf_direct_np(z[low], tol, max_terms)
    if high.any():
        out[high] = 1.0 - _sf_theta_np(z[high], tol, max_terms)
    return np.clip(out, 0.0, 1.0)


def _ksup_sf_np(z, tol, max_terms):
    z, pos, low, high = _ksup_split(z)
    out = np.ones(z.shape)
    if low.any():
        out[low] = 1.0 - _cdf_direct_np(z[low], tol, max_terms)
    if high.any():
        out[high] = _sf_theta_np(z[high], tol, max_terms)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# level-one hitting time of BES3(0):  P(T1 <= s) = sf(1/sqrt(s))


@njit(cache=True)
def _t1_cdf_nb(s, tol, max_terms):
    return _ksup_sf_scalar_nb(1.0 / math.sqrt(s), tol, max_terms)


@njit(cache=True)
def _invert_t1_cdf_nb(u, tol, max_terms):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        p = u[i]
        lo = T1_LO
        hi = T1_HI
        while _t1_cdf_nb(lo, tol, max_terms) > p:
            lo *= 0.25
        while _t1_cdf_nb(hi, tol, max_terms) < p:
            hi *= 4.0
        for _ in range(T1_MAX_ITER):
            if hi / lo - 1.0 <= T1_REL_WIDTH:
                break
            mid = math.sqrt(lo * hi)
            if _t1_cdf_nb(mid, tol, max_terms) < p:
                lo = mid
            else:
                hi = mid
        out[i] = math.sqrt(lo * hi)
    return out


def _invert_t1_cdf_np(u, tol, max_terms):
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, T1_LO)
    hi = np.full(u.shape, T1_HI)

    def cdf(s):
        return _ksup_sf_np(1.0 / np.sqrt(s), tol, max_terms)

    while True:
        bad = cdf(lo) > u
        if not bad.any():
            break
        lo[bad] *= 0.25
    while True:
        bad = cdf(hi) < u
        if not bad.any():
            break
        hi[bad] *= 4.0
    for _ in range(T1_MAX_ITER):
        open_ = hi / lo - 1.0 > T1_REL_WIDTH
        if not open_.any():
            break
        mid = np.sqrt(lo * hi)
        below = cdf(mid) < u
        lo = np.where(open_ & below, mid, lo)
        hi = np.where(open_ & ~below, mid, hi)
    return np.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# Bessel(3) first passage over a chunk of pre-scaled Gaussian increments


@njit(cache=True)
def _scan_first_passage_nb(pos, incr, level):
    """Advance ``pos`` (3,) through ``incr`` (m, 3); stop at norm >= level.

    Returns (index, frac) where index is the crossing step (or -1) and frac
    in (0, 1] is the linear-interpolation fraction inside that step.  ``pos``
    is updated in place to the last visited point.
    """
    x0 = pos[0]
    x1 = pos[1]
    x2 = pos[2]
    y_prev = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    for k in range(incr.shape[0]):
        x0 += incr[k, 0]
        x1 += incr[k, 1]
        x2 += incr[k, 2]
        y = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
        if y >= level:
            pos[0] = x0
            pos[1] = x1
            pos[2] = x2
            return k, (level - y_prev) / (y - y_prev)
        y_prev = y
    pos[0] = x0
    pos[1] = x1
    pos[2] = x2
    return -1, 0.0


def _scan_first_passage_np(pos, incr, level):
    path = pos + np.cumsum(incr, axis=0)
    y = np.sqrt(np.einsum("ij,ij->i", path, path))
    hit = y >= level
    if not hit.any():
        pos[:] = path[-1]
        return -1, 0.0
    k = int(np.argmax(hit))
    y_prev = float(np.sqrt(pos @ pos)) if k == 0 else y[k - 1]
    pos[:] = path[k]
    return k, (level - y_prev) / (y[k] - y_prev)


# ---------------------------------------------------------------------------
# first upward crossing of a level, row-wise over a batch of paths


@njit(cache=True)
def _first_crossings_nb(paths, level):
    """Fractional grid index of the first ``paths[r] >= level[r]``; NaN if none."""
    n, m = paths.shape
    out = np.full(n, np.nan)
    for r in range(n):
        lv = level[r]
        if paths[r, 0] >= lv:
            out[r] = 0.0
            continue
        for k in range(1, m):
            v = paths[r, k]
            if v >= lv:
                prev = paths[r, k - 1]
                out[r] = (k - 1) + (lv - prev) / (v - prev)
                break
    return out


def _first_crossings_np(paths, level):
    level = np.asarray(level, dtype=float)
    hit = paths >= level[:, None]
    any_hit = hit.any(axis=1)
    k = np.argmax(hit, axis=1)
    out = np.full(paths.shape[0], np.nan)
    at0 = any_hit & (k == 0)
    out[at0] = 0.0
    rest = any_hit & (k > 0)
    r = np.nonzero(rest)[0]
    kk = k[rest]
    prev = paths[r, kk - 1]
    cur = paths[r, kk]
    out[rest] = (kk - 1) + (level[rest] - prev) / (cur - prev)
    return out


# ---------------------------------------------------------------------------
# hitting times of an increasing list of levels by one sampled path


@njit(cache=True)
def _level_hitting_times_nb(t, y, levels):
    out = np.full(levels.shape[0], np.nan)
    j = 0
    nl = levels.shape[0]
    while j < nl and y[0] >= levels[j]:
        out[j] = t[0]
        j += 1
    for k in range(1, t.shape[0]):
        if j >= nl:
            break
        while j < nl and y[k] >= levels[j]:
            frac = (levels[j] - y[k - 1]) / (y[k] - y[k - 1])
            if frac < 0.0:
                frac = 0.0
            out[j] = t[k - 1] + frac * (t[k] - t[k - 1])
            j += 1
    return out


def _level_hitting_times_np(t, y, levels):
    sup = np.maximum.accumulate(y)
    idx = np.searchsorted(sup, levels, side="left")
    out = np.full(levels.shape[0], np.nan)
    ok = idx < y.shape[0]
    first = ok & (idx == 0)
    out[first] = t[0]
    mid = ok & (idx > 0)
    k = idx[mid]
    # y[k-1] may sit below the running sup, the crossing is still on [k-1, k]
    frac = np.clip((levels[mid] - y[k - 1]) / (y[k] - y[k - 1]), 0.0, None)
    out[mid] = t[k - 1] + frac * (t[k] - t[k - 1])
    return out


# ---------------------------------------------------------------------------
# coupled dyadic path values


@njit(cache=True)
def _dyadic_path_values_nb(alphas, y, stage, g, partial, suffix, theta, j_min):
    """x[a, t] = (y_t - 2^(i+theta)) G[a, i] + S[i+1] + R[a, i].

    ``stage[t]`` is the active level i (or a value < j_min before the first
    materialised hitting time, in which case x = alpha).  ``g`` and
    ``suffix`` are indexed by level - j_min; ``partial`` by level - j_min too
    (partial[i - j_min] = S_i).
    """
    na = alphas.shape[0]
    nt = y.shape[0]
    x = np.empty((na, nt))
    for a in range(na):
        for k in range(nt):
            i = stage[k]
            if i < j_min:
                x[a, k] = alphas[a]
            else:
                c = i - j_min
                x[a, k] = ((y[k] - 2.0 ** (i + theta)) * g[a, c]
                           + partial[c + 1] + suffix[a, c])
    return x


def _dyadic_path_values_np(alphas, y, stage, g, partial, suffix, theta, j_min):
    x = np.repeat(alphas[:, None], y.shape[0], axis=1).astype(float)
    live = stage >= j_min
    if live.any():
        c = stage[live] - j_min
        scale = np.exp2(stage[live] + theta)
        x[:, live] = ((y[live] - scale)[None, :] * g[:, c]
                      + partial[c + 1][None, :] + suffix[:, c])
    return x


# ---------------------------------------------------------------------------
# dispatch


def ksup_cdf(z, tol, max_terms):
    z = np.ascontiguousarray(z, dtype=float)
    if USE_NUMBA:
        return _ksup_cdf_nb(z.ravel(), tol, max_terms).reshape(z.shape)
    return _ksup_cdf_np(z, tol, max_terms)


def ksup_sf(z, tol, max_terms):
    z = np.ascontiguousarray(z, dtype=float)
    if USE_NUMBA:
        return _ksup_sf_nb(z.ravel(), tol, max_terms).reshape(z.shape)
    return _ksup_sf_np(z, tol, max_terms)


def invert_t1_cdf(u, tol=1e-16, max_terms=1000):
    u = np.ascontiguousarray(u, dtype=float)
    if USE_NUMBA:
        return _invert_t1_cdf_nb(u.ravel(), tol, max_terms).reshape(u.shape)
    return _invert_t1_cdf_np(u, tol, max_terms)


def scan_first_passage(pos, incr, level):
    if USE_NUMBA:
        return _scan_first_passage_nb(pos, incr, level)
    return _scan_first_passage_np(pos, incr, level)


def first_crossings(paths, level):
    paths = np.ascontiguousarray(paths, dtype=float)
    level = np.ascontiguousarray(np.broadcast_to(level, paths.shape[:1]), dtype=float)
    if USE_NUMBA:
        return _first_crossings_nb(paths, level)
    return _first_crossings_np(paths, level)


def level_hitting_times(t, y, levels):
    args = (np.ascontiguousarray(t, dtype=float), np.ascontiguousarray(y, dtype=float),
            np.ascontiguousarray(levels, dtype=float))
    if USE_NUMBA:
        return _level_hitting_times_nb(*args)
    return _level_hitting_times_np(*args)


def dyadic_path_values(alphas, y, stage, g, partial, suffix, theta, j_min):
    args = (np.ascontiguousarray(alphas, dtype=float), np.ascontiguousarray(y, dtype=float),
            np.ascontiguousarray(stage, dtype=np.int64), np.ascontiguousarray(g, dtype=float),
            np.ascontiguousarray(partial, dtype=float), np.ascontiguousarray(suffix, dtype=float),
            float(theta), int(j_min))
    if USE_NUMBA:
        return _dyadic_path_values_nb(*args)
    return _dyadic_path_values_np(*args)

"""Grid-based path simulation of the dyadic grand coupling and its baselines.

All paths are built from Gaussian increments on a user grid; hitting and
meeting times are linearly interpolated between grid points.  Discrete
monitoring misses excursions between grid points, so hitting times are
biased late by roughly ``0.58 * sqrt(dt)`` in level units.  ``dt`` is the
bias/runtime dial.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dyadic_core import (ContextCoverageError, DyadicContext, extend_context,
                          floor_index_matrix, g_matrix)

DEFAULT_DT = 1e-4


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, horizon, dt=DEFAULT_DT):
        n = int(np.ceil(horizon / dt - 1e-9))
        return cls(np.linspace(0.0, n * dt, n + 1))

    @property
    def dt_max(self):
        return float(np.max(np.diff(self.t)))

    @property
    def horizon(self):
        return float(self.t[-1])

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class Bes3Path:
    grid: TimeGrid
    y: np.ndarray
    running_sup: np.ndarray


@dataclass(frozen=True)
class HittingTimes:
    """First times the driver reaches ``2**(i+theta)``; NaN marks an absent level."""

    theta: float
    levels: np.ndarray
    times: np.ndarray

    def time(self, i):
        k = int(i - self.levels[0])
        if not 0 <= k < self.levels.size:
            raise KeyError(i)
        return float(self.times[k])

    def present(self):
        return ~np.isnan(self.times)


@dataclass(frozen=True)
class PathBundle:
    grid: TimeGrid
    starts: np.ndarray
    x: np.ndarray
    context: DyadicContext
    stage: np.ndarray
    floor_index: np.ndarray

    def coalesced(self, a, b, k):
        """Rows ``a`` and ``b`` agree at grid index ``k`` and forever after.

        Decided on the integer floor indices of the active level, which
        determine the whole sign history from that level up.
        """
        i = self.stage[k]
        if i < self.context.j_min:
            return self.starts[a] == self.starts[b]
        c = i - self.context.j_min
        return self.floor_index[a, c] == self.floor_index[b, c]

    def to_csv(self, path_or_file):
        """Header ``t,<start_0>,<start_1>,...`` then one row per grid time."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"{s:.17g}" for s in self.starts])
            for k, tk in enumerate(self.grid.t):
                w.writerow([f"{tk:.17g}"] + [f"{v:.17g}" for v in self.x[:, k]])
        finally:
            if own:
                fh.close()


@dataclass(frozen=True)
class PairCoupling:
    """Two coupled paths on one grid and their (interpolated) coupling time."""

    grid: TimeGrid
    x_alpha: np.ndarray
    x_beta: np.ndarray
    coupling_time: float
    censored: bool


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def simulate_bes3(rng_seed, grid: TimeGrid) -> Bes3Path:
    rng = _rng(rng_seed)
    dt = np.diff(grid.t)
    incr = rng.standard_normal((dt.size, 3)) * np.sqrt(dt)[:, None]
    pos = np.vstack([np.zeros((1, 3)), np.cumsum(incr, axis=0)])
    y = np.sqrt(np.einsum("ij,ij->i", pos, pos))
    return Bes3Path(grid=grid, y=y, running_sup=np.maximum.accumulate(y))


def hitting_times(path: Bes3Path, theta: float, levels) -> HittingTimes:
    levels = np.arange(levels[0], levels[-1] + 1) if not isinstance(levels, range) \
        else np.arange(levels.start, levels.stop)
    heights = np.exp2(levels + theta)
    times = kernels.level_hitting_times(path.grid.t, path.y, heights)
    return HittingTimes(theta=theta, levels=levels, times=times)


def _stages(grid, hits: HittingTimes, j_min):
    """Active level i with T_{i-1} < t <= T_i for each grid time (j_min-1 before T_{j_min-1})."""
    t = grid.t
    # hits.levels starts at j_min - 1
    finite = hits.times[~np.isnan(hits.times)]
    # number of hitting times strictly below t gives the offset into the level list
    cnt = np.searchsorted(finite, t, side="left")
    stage = hits.levels[0] + cnt
    stage[t == 0.0] = j_min - 1
    return stage


def _signs_and_suffix(ctx, starts):
    """G as floats and suffix[a, c] = sum_{levels above j_min + c} (W - G) 2**(j+theta-1)."""
    g = g_matrix(ctx, starts).astype(float)
    w = ctx.signs.astype(float)
    weights = np.exp2(ctx.levels + ctx.theta - 1.0)
    terms = (w[None, :] - g) * weights[None, :]
    suffix = np.zeros_like(terms)
    suffix[:, :-1] = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return g, suffix


def coalescence_points(ctx: DyadicContext, starts, level):
    """Distinct positions of the paths at ``T_level``, when the driver first hits ``2**(level+theta)``.

    Starts sharing a floor index at ``level + 1`` sit at the same point from
    then on.  The points lie on a lattice of spacing ``2**(level+1+theta)``:
    two of them are as many spacings apart as their floor indices differ.
    Returns ``(points, floor_indices)``, both sorted.
    """
    starts = np.sort(np.atleast_1d(np.asarray(starts, dtype=float)))
    if level + 2 > ctx.j_max:
        ctx = extend_context(ctx, level + 2)
    if not ctx.j_min <= level:
        raise ValueError("level below the context window")
    g, suffix = _signs_and_suffix(ctx, starts)
    y = np.array([2.0 ** (level + ctx.theta)])
    x = kernels.dyadic_path_values(starts, y, np.array([level + 1]), g, ctx._partial, suffix,
                                   ctx.theta, ctx.j_min)[:, 0]
    idx = floor_index_matrix(ctx, starts)[:, level + 1 - ctx.j_min]
    cls, first = np.unique(idx, return_index=True)
    return x[first], cls


def dyadic_paths(ctx: DyadicContext, path: Bes3Path, starts, horizon=None) -> PathBundle:
    """Evaluate the coupled paths X_{theta, alpha, t} for every start.

    Uses ``X = (Y_t - 2**(i+theta)) G_i + S_{i+1} + sum_{j>i} (W_j - G_j) 2**(j+theta-1)``
    on stage ``i`` (``T_{i-1} < t <= T_i``), which is exact on the window.
    Before ``T_{j_min-1}`` the paths are held at their start (error at most
    ``2**(j_min+theta)``).  The context is extended upward if the driver
    reaches levels above ``j_max`` within the horizon.
    """
    starts = np.sort(np.atleast_1d(np.asarray(starts, dtype=float)))
    if np.any(np.abs(starts) > ctx.radius):
        raise ContextCoverageError("starts outside the context's covered radius")
    grid = path.grid
    if horizon is not None and horizon < grid.horizon:
        keep = grid.t <= horizon
        grid = TimeGrid(grid.t[keep])
        path = Bes3Path(grid, path.y[keep], path.running_sup[keep])

    top = path.running_sup[-1]
    # smallest level whose height exceeds the sup reached
    i_top = int(np.floor(np.log2(top) - ctx.theta)) + 1 if top > 0 else ctx.j_min
    if i_top + 1 > ctx.j_max:
        ctx = extend_context(ctx, i_top + 1)

    hits = hitting_times(path, ctx.theta, range(ctx.j_min - 1, ctx.j_max + 1))
    stage = _stages(grid, hits, ctx.j_min)
    g, suffix = _signs_and_suffix(ctx, starts)
    x = kernels.dyadic_path_values(starts, path.y, stage, g, ctx._partial, suffix,
                                   ctx.theta, ctx.j_min)
    return PathBundle(grid=grid, starts=starts, x=x, context=ctx, stage=stage,
                      floor_index=floor_index_matrix(ctx, starts))


# ---------------------------------------------------------------------------
# baseline pair couplings


def _bm_batch(rng, start, grid, n):
    dt = np.diff(grid.t)
    incr = rng.standard_normal((n, dt.size)) * np.sqrt(dt)[None, :]
    out = np.empty((n, grid.t.size))
    out[:, 0] = start
    np.cumsum(incr, axis=1, out=out[:, 1:])
    out[:, 1:] += start
    return out


def _interp_time(grid, frac_index):
    k = np.floor(frac_index).astype(int)
    k = np.minimum(k, grid.t.size - 2)
    f = frac_index - k
    return grid.t[k] + f * (grid.t[k + 1] - grid.t[k])


def _couple_after(x_a, x_b, grid, frac):
    """Make ``x_b`` follow ``x_a`` from the first grid point at or after the meeting."""
    if np.isnan(frac):
        return x_b, grid.horizon, True
    tau = float(_interp_time(grid, np.array([frac]))[0])
    k = int(np.ceil(frac))
    x_b = x_b.copy()
    x_b[k:] = x_a[k:]
    return x_b, tau, False


def reflection_pair(rng_seed, alpha, beta, grid: TimeGrid) -> PairCoupling:
    """Reflection coupling: mirror about (alpha+beta)/2 until the first hit, then glue."""
    if alpha == beta:
        raise ValueError("reflection_pair needs distinct starts")
    rng = _rng(rng_seed)
    xa = _bm_batch(rng, alpha, grid, 1)[0]
    mid = 0.5 * (alpha + beta)
    direction = 1.0 if beta > alpha else -1.0
    frac = kernels.first_crossings((direction * xa)[None, :], direction * mid)[0]
    xb, tau, cens = _couple_after(xa, alpha + beta - xa, grid, frac)
    return PairCoupling(grid, xa, xb, tau, cens)


def brownian_web_pair(rng_seed, alpha, beta, grid: TimeGrid) -> PairCoupling:
    """Independent motion until the first meeting, identical afterwards."""
    if alpha == beta:
        raise ValueError("brownian_web_pair needs distinct starts")
    rng = _rng(rng_seed)
    both = _bm_batch(rng, 0.0, grid, 2)
    xa, xb = both[0] + alpha, both[1] + beta
    sgn = 1.0 if alpha > beta else -1.0  # make the difference start positive
    d = sgn * (xa - xb)
    frac = kernels.first_crossings((-d)[None, :], 0.0)[0]
    xb, tau, cens = _couple_after(xa, xb, grid, frac)
    return PairCoupling(grid, xa, xb, tau, cens)


def reflection_coupling_times(rng_seed, distance, grid: TimeGrid, n, batch=2000):
    """Coupling times of ``n`` independent reflection pairs (NaN = censored).

    Only the hitting time of the midpoint matters, so paths are generated in
    batches and discarded.
    """
    rng = _rng(rng_seed)
    out = np.empty(n)
    for lo in range(0, n, batch):
        m = min(batch, n - lo)
        paths = _bm_batch(rng, 0.0, grid, m)
        frac = kernels.first_crossings(paths, np.full(m, 0.5 * distance))
        out[lo:lo + m] = np.where(np.isnan(frac), np.nan, _interp_time(grid, np.nan_to_num(frac)))
    return out


def brownian_web_coupling_times(rng_seed, distance, grid: TimeGrid, n, batch=1000):
    """Meeting times of ``n`` independent Brownian-web pairs (NaN = censored)."""
    rng = _rng(rng_seed)
    out = np.empty(n)
    for lo in range(0, n, batch):
        m = min(batch, n - lo)
        a = _bm_batch(rng, 0.0, grid, m)
        b = _bm_batch(rng, 0.0, grid, m)
        # beta = alpha + distance: the pair meets when a - b first reaches distance
        frac = kernels.first_crossings(a - b, np.full(m, distance))
        out[lo:lo + m] = np.where(np.isnan(frac), np.nan, _interp_time(grid, np.nan_to_num(frac)))
    return out

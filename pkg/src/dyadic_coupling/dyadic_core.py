"""Sign sequences and the level-by-level bookkeeping of the dyadic coupling.

Levels are integers ``j``; level ``j`` has scale ``2**(j + theta)``.  A
:class:`DyadicContext` materialises the signs ``W_j`` on a window
``[j_min, j_max]`` and replaces everything below ``j_min`` by one exact
uniform draw of the tail sum ``sum_{k<j_min} W_k 2**(k+theta-1)``, which is
uniform on ``[-2**(j_min+theta-1), 2**(j_min+theta-1)]``.

``j_max`` is chosen so that, for every start ``alpha`` with ``|alpha| <=
radius``, both a ``+1`` and a ``-1`` sign appear at levels ``k`` with
``2**k > 4 * radius`` strictly below ``j_max``.  From that level on
``G_{alpha, j} = W_j``, so all infinite sums over ``j >= j_max`` collapse
to their window part.

Floating point: ``a mod b`` is ``a - b * floor(a / b)`` on doubles.  Points
within rounding distance of a dyadic boundary are resolved by the raw
``floor``.  With ``theta = 0`` and dyadic-rational starts the arithmetic is
exact apart from the tail draw.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

CONTEXT_FORMAT_VERSION = 1
_SIGN_BLOCK = 16


class ContextCoverageError(ValueError):
    """The context window does not reach far enough for the request."""


def _sign_stream(seed_seq, start, count):
    """Signs for window positions ``start .. start+count-1``.

    One raw 64-bit word per level, low bit -> sign.  Using raw words keeps
    the stream prefix-consistent, so growing a window never changes signs
    already drawn.
    """
    bitgen = np.random.PCG64(seed_seq)
    if start:
        bitgen.advance(start)
    raw = bitgen.random_raw(count)
    return np.where(raw & np.uint64(1), 1, -1).astype(np.int8)


def _children(seed):
    """(aux, sign) child sequences of ``seed``; stateless, unlike ``spawn``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return tuple(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,))
                 for i in (0, 1))


@dataclass(frozen=True)
class DyadicContext:
    """One realisation of (Theta, {W_j}, tail) driving the grand coupling.

    ``signs[k]`` is ``W_{j_min + k}``; ``radius`` is the largest ``|alpha|``
    the window was grown to cover.
    """

    theta: float
    j_min: int
    j_max: int
    signs: np.ndarray
    tail_uniform: float
    radius: float
    seed: object = None
    _partial: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int8)
        if self.j_max < self.j_min:
            raise ValueError("j_max < j_min")
        if signs.shape != (self.j_max - self.j_min + 1,):
            raise ValueError("signs must cover [j_min, j_max]")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +1 or -1")
        if abs(self.tail_uniform) > 2.0 ** (self.j_min + self.theta - 1):
            raise ValueError("tail sample outside its support")
        signs.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        weights = np.exp2(np.arange(self.j_min, self.j_max + 1) + self.theta - 1.0)
        partial = np.empty(signs.size + 1)
        partial[0] = self.tail_uniform
        partial[1:] = self.tail_uniform + np.cumsum(signs * weights)
        partial.setflags(write=False)
        object.__setattr__(self, "_partial", partial)

    # window helpers
    @property
    def levels(self):
        return np.arange(self.j_min, self.j_max + 1)

    def sign(self, j):
        self._check_level(j)
        return int(self.signs[j - self.j_min])

    def _check_level(self, j, upper_extra=0):
        if not self.j_min <= j <= self.j_max + upper_extra:
            raise ContextCoverageError(
                f"level {j} outside window [{self.j_min}, {self.j_max + upper_extra}]")

    # serialisation
    def to_record(self):
        seed = self.seed
        if isinstance(seed, np.random.SeedSequence):
            seed = {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
        return {
            "version": CONTEXT_FORMAT_VERSION,
            "seed": seed,
            "theta": self.theta,
            "j_min": self.j_min,
            "j_max": self.j_max,
            "signs": [int(s) for s in self.signs],
            "tail_uniform": self.tail_uniform,
            "radius": self.radius,
        }

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec):
        if rec.get("version") != CONTEXT_FORMAT_VERSION:
            raise ValueError(f"unsupported context record version {rec.get('version')!r}")
        seed = rec.get("seed")
        if isinstance(seed, dict):
            seed = np.random.SeedSequence(seed["entropy"], spawn_key=tuple(seed["spawn_key"]))
        return cls(theta=float(rec["theta"]), j_min=int(rec["j_min"]), j_max=int(rec["j_max"]),
                   signs=np.array(rec["signs"], dtype=np.int8),
                   tail_uniform=float(rec["tail_uniform"]), radius=float(rec["radius"]),
                   seed=seed)

    @classmethod
    def from_json(cls, text):
        return cls.from_record(json.loads(text))


def covering_j_max(signs, j_min, radius):
    """Smallest admissible ``j_max`` for ``signs`` (None if not yet reached).

    Both signs must occur at levels ``k`` with ``2**k > 4 * radius``; the
    window then ends one level above the higher of the two witnesses.
    """
    levels = j_min + np.arange(signs.size)
    eligible = np.exp2(levels.astype(float)) > 4.0 * radius
    plus = np.nonzero(eligible & (signs == 1))[0]
    minus = np.nonzero(eligible & (signs == -1))[0]
    if plus.size == 0 or minus.size == 0:
        return None
    return int(j_min + max(plus[0], minus[0]) + 1)


def new_context(rng_seed, theta=None, j_min=-30, alpha_range=(0.0, 1.0), j_max_at_least=None):
    """Draw a context covering every start in ``alpha_range``.

    ``theta=None`` samples Theta ~ Unif[0, 1]; a number fixes it.  The same
    seed always gives the same context, and two contexts from one seed that
    differ only in ``j_max_at_least`` agree on their common window.
    """
    aux_seq, sign_seq = _children(rng_seed)
    aux = np.random.default_rng(aux_seq)
    th = float(aux.random()) if theta is None else float(theta)
    if not 0.0 <= th <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    half = 2.0 ** (j_min + th - 1)
    tail = float(aux.uniform(-half, half))
    radius = float(max(abs(alpha_range[0]), abs(alpha_range[1])))

    signs = _sign_stream(sign_seq, 0, _SIGN_BLOCK)
    while True:
        j_max = covering_j_max(signs, j_min, radius)
        if j_max is not None:
            if j_max_at_least is not None:
                j_max = max(j_max, int(j_max_at_least))
            need = j_max - j_min + 1
            if signs.size >= need:
                break
        else:
            need = signs.size + _SIGN_BLOCK
        signs = np.concatenate([signs, _sign_stream(sign_seq, signs.size, need - signs.size)])
    return DyadicContext(theta=th, j_min=j_min, j_max=j_max, signs=signs[: j_max - j_min + 1],
                         tail_uniform=tail, radius=radius, seed=rng_seed)


def extend_context(ctx: DyadicContext, j_max: int) -> DyadicContext:
    """Same realisation with the window raised to at least ``j_max``."""
    if j_max <= ctx.j_max:
        return ctx
    if ctx.seed is None:
        raise ValueError("cannot extend a context without its seed")
    _, sign_seq = _children(ctx.seed)
    extra = _sign_stream(sign_seq, ctx.signs.size, j_max - ctx.j_max)
    return DyadicContext(theta=ctx.theta, j_min=ctx.j_min, j_max=j_max,
                         signs=np.concatenate([ctx.signs, extra]),
                         tail_uniform=ctx.tail_uniform, radius=ctx.radius, seed=ctx.seed)


def partial_sum(ctx: DyadicContext, j: int) -> float:
    """``sum_{k<j} W_k 2**(k+theta-1)``, valid for ``j_min <= j <= j_max + 1``."""
    ctx._check_level(j, upper_extra=1)
    return float(ctx._partial[j - ctx.j_min])


def compute_g(ctx: DyadicContext, alpha: float, j: int) -> int:
    ctx._check_level(j)
    return int(g_matrix(ctx, np.array([alpha]))[0, j - ctx.j_min])


def floor_level_index(ctx: DyadicContext, alpha: float, j: int) -> int:
    """``floor(2**-(j+theta) * (alpha - S_j) + 1/2)``."""
    ctx._check_level(j)
    return int(floor_index_matrix(ctx, np.array([alpha]))[0, j - ctx.j_min])


def _check_cover(ctx, alphas):
    if np.any(np.abs(alphas) > ctx.radius):
        raise ContextCoverageError(
            f"start outside the covered radius {ctx.radius}; rebuild the context with a wider range")


def g_matrix(ctx: DyadicContext, alphas) -> np.ndarray:
    """``G[a, j - j_min]`` for every start and window level (int8)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    j = ctx.levels.astype(float)
    scale = np.exp2(j + ctx.theta)
    s_j = ctx._partial[:-1]
    a = alphas[:, None] - s_j[None, :] + 0.5 * scale[None, :]
    b = 2.0 * scale[None, :]
    r = a - b * np.floor(a / b)
    same = r < scale[None, :]
    w = ctx.signs.astype(np.int8)[None, :]
    return np.where(same, w, -w).astype(np.int8)


def floor_index_matrix(ctx: DyadicContext, alphas) -> np.ndarray:
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    scale = np.exp2(ctx.levels.astype(float) + ctx.theta)
    s_j = ctx._partial[:-1]
    return np.floor((alphas[:, None] - s_j[None, :]) / scale[None, :] + 0.5).astype(np.int64)


def suffix_index_matrix(ctx: DyadicContext, alphas) -> np.ndarray:
    """``sum_{k=j}^{j_max} (W_k - G_k) 2**(k-j-1)`` for every window level j.

    Integer valued; equals :func:`floor_index_matrix` when the window covers
    the starts.
    """
    g = g_matrix(ctx, alphas).astype(np.int64)
    d = (ctx.signs.astype(np.int64)[None, :] - g) // 2  # in {-1, 0, 1}
    out = np.zeros_like(d)
    acc = np.zeros(d.shape[0], dtype=np.int64)
    for c in range(d.shape[1] - 1, -1, -1):
        acc = 2 * acc + d[:, c]
        out[:, c] = acc
    return out


@dataclass(frozen=True)
class DisagreementRecord:
    alpha: float
    beta: float
    level: int | None


def disagreement_level(ctx: DyadicContext, alpha: float, beta: float) -> DisagreementRecord:
    """Highest level at which the floor indices of ``alpha`` and ``beta`` differ.

    Returns a record with ``level=None`` when ``alpha == beta``.  Raises
    :class:`ContextCoverageError` if a start lies outside the covered radius
    or the two starts agree on the whole window (their separation is below
    the window's resolution ``2**(j_min+theta)``).
    """
    if alpha == beta:
        return DisagreementRecord(alpha, beta, None)
    _check_cover(ctx, np.array([alpha, beta]))
    idx = floor_index_matrix(ctx, np.array([alpha, beta]))
    diff = np.nonzero(idx[0] != idx[1])[0]
    if diff.size == 0:
        raise ContextCoverageError("starts agree on the whole window; lower j_min")
    return DisagreementRecord(alpha, beta, int(ctx.j_min + diff[-1]))


def disagreement_levels(ctx: DyadicContext, alphas, beta: float) -> np.ndarray:
    """Vectorised :func:`disagreement_level` of each start against ``beta``.

    Entries where the start equals ``beta`` are ``j_min - 1``.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    _check_cover(ctx, np.append(alphas, beta))
    idx = floor_index_matrix(ctx, np.append(alphas, beta))
    neq = idx[:-1] != idx[-1][None, :]
    top = neq.shape[1] - 1 - np.argmax(neq[:, ::-1], axis=1)
    return np.where(neq.any(axis=1), ctx.j_min + top, ctx.j_min - 1)


def reconstruct_alpha(ctx: DyadicContext, alpha: float) -> float:
    """``sum_{j=j_min}^{j_max} (W_j - G_j) 2**(j+theta-1)``; within ``2**(j_min+theta)`` of alpha."""
    _check_cover(ctx, np.array([alpha]))
    g = g_matrix(ctx, np.array([alpha]))[0].astype(float)
    w = ctx.signs.astype(float)
    weights = np.exp2(ctx.levels + ctx.theta - 1.0)
    return float(np.sum((w - g) * weights))

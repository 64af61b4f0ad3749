"""Numba kernels against their pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each kernel is
called once to trigger compilation before timing, and the two versions are
checked to agree before their timings are reported.
"""
import argparse
import time

import numpy as np

from dyadic_coupling import kernels as K
from dyadic_coupling._accel import HAVE_NUMBA


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    z = rng.uniform(0.05, 6.0, 200_000)
    u = rng.random(20_000)
    incr = rng.standard_normal((200_000, 3)) * 1e-2
    paths = np.cumsum(rng.standard_normal((200, 5_000)) * 1e-2, axis=1)
    t = np.linspace(0.0, 20.0, 200_001)
    y = np.sqrt(np.sum(np.cumsum(rng.standard_normal((200_000, 3)) * 1e-2, axis=0) ** 2, axis=1))
    y = np.concatenate([[0.0], y])
    levels = np.exp2(np.arange(-12, 4) + 0.3)
    return {
        "ksup_cdf": (lambda: K._ksup_cdf_nb(z, 1e-15, 1000), lambda: K._ksup_cdf_np(z, 1e-15, 1000)),
        "ksup_sf": (lambda: K._ksup_sf_nb(z, 1e-15, 1000), lambda: K._ksup_sf_np(z, 1e-15, 1000)),
        "invert_t1_cdf": (lambda: K._invert_t1_cdf_nb(u, 1e-16, 1000),
                          lambda: K._invert_t1_cdf_np(u, 1e-16, 1000)),
        "scan_first_passage": (lambda: K._scan_first_passage_nb(np.zeros(3), incr, 1e9),
                               lambda: K._scan_first_passage_np(np.zeros(3), incr, 1e9)),
        "first_crossings": (lambda: K._first_crossings_nb(paths, np.full(200, 0.5)),
                            lambda: K._first_crossings_np(paths, np.full(200, 0.5))),
        "level_hitting_times": (lambda: K._level_hitting_times_nb(t, y, levels),
                                lambda: K._level_hitting_times_np(t, y, levels)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy versions exist")
        return 1
    print(f"{'kernel':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (nb, npy) in cases(np.random.default_rng(args.seed)).items():
        a, b = nb(), npy()  # warm-up / compile
        if not np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                           rtol=1e-10, atol=1e-13, equal_nan=True):
            raise SystemExit(f"{name}: numba and numpy disagree")
        t_nb, t_np = _best(nb, args.repeat), _best(npy, args.repeat)
        print(f"{name:<22}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

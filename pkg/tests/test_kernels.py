"""The numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from dyadic_coupling import _accel, kernels as K

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def test_ksup_parity(rng):
    z = np.concatenate([rng.uniform(0.01, 8.0, 5000), [K.Z_SWITCH, 1e-3, 50.0]])
    np.testing.assert_allclose(K._ksup_cdf_nb(z, 1e-15, 1000), K._ksup_cdf_np(z, 1e-15, 1000),
                               rtol=0, atol=1e-15)
    np.testing.assert_allclose(K._ksup_sf_nb(z, 1e-15, 1000), K._ksup_sf_np(z, 1e-15, 1000),
                               rtol=1e-13, atol=1e-300)


def test_ksup_branches_meet_at_switch():
    lo = np.nextafter(K.Z_SWITCH, 0.0)
    hi = np.nextafter(K.Z_SWITCH, 2.0)
    a, b = K.ksup_cdf(np.array([lo, hi]), 1e-16, 1000)
    assert abs(a - b) < 1e-14


def test_t1_inversion_parity_and_roundtrip(rng):
    u = np.concatenate([rng.random(500), [1e-12, 0.5, 1 - 1e-12]])
    a = K._invert_t1_cdf_nb(u, 1e-16, 1000)
    b = K._invert_t1_cdf_np(u, 1e-16, 1000)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    back = K.ksup_sf(1.0 / np.sqrt(a), 1e-16, 1000)
    np.testing.assert_allclose(back, u, atol=1e-11)


def test_scan_first_passage_parity(rng):
    incr = rng.standard_normal((4000, 3)) * 0.05
    for level in (0.3, 1.0, 2.0, 100.0):
        p1, p2 = np.zeros(3), np.zeros(3)
        r1 = K._scan_first_passage_nb(p1, incr, level)
        r2 = K._scan_first_passage_np(p2, incr, level)
        assert r1[0] == r2[0]
        assert r1[1] == pytest.approx(r2[1], rel=1e-12)
        np.testing.assert_allclose(p1, p2, rtol=1e-12)


def test_scan_first_passage_resumes_from_state(rng):
    incr = rng.standard_normal((3000, 3)) * 0.05
    level = 1.5
    whole = K._scan_first_passage_nb(np.zeros(3), incr, level)
    assert whole[0] > 10
    cut = whole[0] // 2
    pos = np.zeros(3)
    first = K._scan_first_passage_nb(pos, incr[:cut], level)
    assert first[0] == -1
    rest = K._scan_first_passage_nb(pos, incr[cut:], level)
    assert rest[0] + cut == whole[0]
    assert rest[1] == pytest.approx(whole[1], rel=1e-9)


def test_first_crossings_parity(rng):
    paths = np.cumsum(rng.standard_normal((300, 800)) * 0.05, axis=1)
    level = rng.uniform(-0.2, 1.5, 300)
    a = K._first_crossings_nb(paths, level)
    b = K._first_crossings_np(paths, level)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=1e-13)


def test_first_crossings_interpolates_linearly():
    paths = np.array([[0.0, 1.0, 3.0], [5.0, 6.0, 7.0], [0.0, -1.0, -2.0]])
    out = K.first_crossings(paths, np.array([2.0, 1.0, 1.0]))
    assert out[0] == pytest.approx(1.5)
    assert out[1] == 0.0
    assert np.isnan(out[2])


def test_level_hitting_times_parity(rng):
    t = np.linspace(0, 5, 50_001)
    y = np.concatenate([[0.0], np.sqrt(np.sum(np.cumsum(rng.standard_normal((50_000, 3)) * 0.01,
                                                        axis=0) ** 2, axis=1))])
    levels = np.exp2(np.arange(-14, 3) + 0.37)
    a = K._level_hitting_times_nb(t, y, levels)
    b = K._level_hitting_times_np(t, y, levels)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    ok = ~np.isnan(a)
    np.testing.assert_allclose(a[ok], b[ok], rtol=1e-13)
    assert np.all(np.diff(a[ok]) >= 0)


def test_dyadic_path_values_parity(rng):
    na, nt, nl, j_min = 7, 300, 12, -5
    alphas = np.sort(rng.random(na))
    y = np.abs(rng.standard_normal(nt))
    stage = rng.integers(j_min - 1, j_min + nl, nt)
    g = rng.choice([-1.0, 1.0], (na, nl))
    partial = rng.standard_normal(nl + 1)
    suffix = rng.standard_normal((na, nl))
    a = K._dyadic_path_values_nb(alphas, y, stage, g, partial, suffix, 0.3, j_min)
    b = K._dyadic_path_values_np(alphas, y, stage, g, partial, suffix, 0.3, j_min)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("value, disabled", [("1", True), ("true", True), ("YES", True),
                                             ("on", True), ("0", False), ("", False)])
def test_env_flag_parsing(monkeypatch, value, disabled):
    monkeypatch.setenv("DYADIC_COUPLING_DISABLE_JIT", value)
    assert _accel.jit_disabled_by_env() is disabled


def test_env_flag_selects_numpy_path_in_fresh_process():
    code = ("from dyadic_coupling import _accel, analytics;"
            "print(_accel.USE_NUMBA, repr(analytics.failure_prob_dyadic(1.0)))")
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, DYADIC_COUPLING_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        out[flag] = res.stdout.split()
    assert out["1"][0] == "False" and out["0"][0] == "True"
    assert float(out["1"][1]) == pytest.approx(float(out["0"][1]), abs=1e-14)

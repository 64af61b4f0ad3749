import math

import numpy as np
import pytest

from dyadic_coupling import analytics as A
from dyadic_coupling import montecarlo as M


@pytest.fixture(scope="module")
def exact():
    return M.sample_upsilon_exact(2024, 1.0, 200_000)


def test_exact_sampler_is_seeded(exact):
    again = M.sample_upsilon_exact(2024, 1.0, 200_000)
    np.testing.assert_array_equal(exact.value, again.value)
    other = M.sample_upsilon_exact(2025, 1.0, 1000)
    assert not np.array_equal(other.value, exact.value[:1000])


def test_exact_sampler_validation():
    with pytest.raises(ValueError):
        M.sample_upsilon_exact(0, 0.0, 10)
    with pytest.raises(ValueError):
        M.sample_upsilon_exact(0, 1.0, 0)


def test_exact_failure_at_one(exact):
    h = A.failure_prob_dyadic(1.0)
    emp = np.mean(exact.value > 1.0)
    assert abs(emp - h) <= 3 * math.sqrt(h * (1 - h) / len(exact))


def test_exact_ks_against_formula(exact):
    assert M.check_ks("ks", exact, M.analytic_cdf(1.0)).passed


def test_level_marginal(exact):
    assert M.check_level_marginal(exact, 1.0).passed


def test_t1_law(exact):
    t1 = M.CouplingTimeSamples(exact.t1, exact.censored, "exact", 1.0)
    assert M.check_ks("t1", t1, M.t1_cdf).passed


def test_scaling_in_distribution(exact):
    doubled = M.sample_upsilon_exact(7, 2.0, 200_000)
    q = [0.1, 0.25, 0.5, 0.75, 0.9]
    a = np.quantile(exact.value, q)
    b = np.quantile(doubled.value / 4.0, q)
    # quantile standard error sqrt(q(1-q)/n) / f(x_q), bounded crudely through the CDF slope
    F = M.analytic_cdf(1.0)
    for qa, qb, x in zip(a, b, a):
        slope = (F(x * 1.01) - F(x * 0.99)) / (0.02 * x)
        se = math.sqrt(0.25 / len(exact)) / slope * math.sqrt(2)
        assert abs(qa - qb) <= 3 * se


def test_heavy_tail_bound(exact):
    n = len(exact)
    for s in (10.0, 100.0):
        emp = np.mean(exact.value > s)
        bound = (1 / math.sqrt(s)) / math.sqrt(2 * math.pi)
        assert emp <= bound + 3 * math.sqrt(bound * (1 - bound) / n)


def test_two_exact_runs_are_ks_compatible():
    a = M.sample_upsilon_exact(1, 1.0, 100_000)
    b = M.sample_upsilon_exact(2, 1.0, 100_000)
    assert M.check_two_sample("two", a, b).passed


def test_pathsim_small_run():
    s = M.sample_upsilon_pathsim(3, 0.0, 1.0, dt=1e-3, horizon=5.0, n=300)
    assert s.method == "path_sim" and len(s) == 300
    assert np.all(s.value[s.censored] == 5.0)
    assert np.all(s.value[~s.censored] <= 5.0)
    # draw i does not depend on n
    head = M.sample_upsilon_pathsim(3, 0.0, 1.0, dt=1e-3, horizon=5.0, n=50)
    np.testing.assert_array_equal(head.value, s.value[:50])


def test_pathsim_equal_starts():
    s = M.sample_upsilon_pathsim(0, 0.4, 0.4, n=5)
    assert np.all(s.value == 0.0) and not s.censored.any()


def test_pathsim_agrees_with_exact():
    path = M.sample_upsilon_pathsim(11, 0.0, 1.0, dt=1e-4, horizon=20.0, n=2000)
    exact = M.sample_upsilon_exact(12, 1.0, 20_000)
    assert M.check_two_sample("x", path, exact).passed
    h = A.failure_prob_dyadic(1.0)
    emp = np.mean(path.censored | (path.value > 1.0))
    assert abs(emp - h) <= 3 * math.sqrt(h * (1 - h) / 2000) + 0.01


def test_empirical_cdf_basics():
    one = M.CouplingTimeSamples(np.array([2.0]), np.array([False]), "exact", 1.0)
    t = M.empirical_cdf(one)
    np.testing.assert_array_equal(t([1.999, 2.0, 3.0]), [0.0, 1.0, 1.0])
    assert M.ks_distance(t, t) == 0.0
    with pytest.raises(ValueError):
        M.empirical_cdf(M.CouplingTimeSamples(np.array([5.0]), np.array([True]), "path_sim", 1.0))


def test_censoring_only_lowers_mass():
    s = M.CouplingTimeSamples(np.array([0.5, 1.0, 3.0, 3.0]), np.array([False, False, True, True]),
                              "path_sim", 1.0)
    t = M.empirical_cdf(s)
    assert t.valid_below == 3.0
    np.testing.assert_allclose(t([0.5, 1.0, 2.9]), [0.25, 0.5, 0.5])


def test_ks_distance_with_ties_and_analytic():
    s = M.CouplingTimeSamples(np.array([1.0, 1.0, 2.0, 3.0]), np.zeros(4, bool), "exact", 1.0)
    t = M.empirical_cdf(s)
    np.testing.assert_allclose(t.p, [0.5, 0.75, 1.0])
    uniform = lambda x: np.clip(np.asarray(x) / 4.0, 0, 1)  # noqa: E731
    # jumps at 1 (0 -> 0.5 vs 0.25), 2 (0.5 -> 0.75 vs 0.5), 3 (0.75 -> 1 vs 0.75)
    assert M.ks_distance(t, uniform) == pytest.approx(0.25)


def test_exact_samples_never_censored():
    with pytest.raises(ValueError):
        M.CouplingTimeSamples(np.array([1.0]), np.array([True]), "exact", 1.0)
    with pytest.raises(ValueError):
        M.CouplingTimeSamples(np.array([-1.0]), np.array([False]), "exact", 1.0)


def test_sample_csv_roundtrip(tmp_path):
    s = M.sample_upsilon_exact(0, 1.0, 50)
    f = tmp_path / "s.csv"
    s.to_csv(f)
    back = M.CouplingTimeSamples.from_csv(f)
    np.testing.assert_array_equal(back.value, s.value)
    assert b"\r" not in f.read_bytes()

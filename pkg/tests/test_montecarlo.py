import math

import numpy as np
import pytest

from cutofflab.errors import InvalidArgument
from cutofflab.montecarlo import (
    BATCH,
    PsiStats,
    SimConfig,
    estimate_psi_stats,
    goodness_of_fit,
    psi_exact_mean,
    psi_exact_moments,
    psi_stationary_moments,
    psi_value,
    sample_uniform,
    simulate,
    stationary_stats,
    tv_lower_bound,
)
from cutofflab.spectral import exact_tv
from cutofflab.torus import canonicalize
from cutofflab.walks import make_dg_1xn, make_dg_nxn, make_srw

W = make_dg_1xn(3, 5)


def test_time_zero_stays_home():
    assert not simulate(SimConfig(0.0, 100, 1, W)).any()
    st = estimate_psi_stats(SimConfig(0.0, 100, 1, W))
    assert st.mean == 2 and st.variance == 0


def test_determinism_and_worker_independence():
    a = simulate(SimConfig(3.0, 3 * BATCH + 17, 42, W, threads=1))
    b = simulate(SimConfig(3.0, 3 * BATCH + 17, 42, W, threads=3))
    c = simulate(SimConfig(3.0, 3 * BATCH + 17, 42, W))
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert not np.array_equal(a, simulate(SimConfig(3.0, 3 * BATCH + 17, 43, W)))
    # a prefix of samples does not depend on the total count
    assert np.array_equal(simulate(SimConfig(3.0, 100, 42, W)), a[:100])


def test_goodness_of_fit_other_walks():
    for walk, t, s in ((make_dg_nxn(3, 3), 2.0, 5), (make_srw(2, 7), 6.0, 9)):
        e = simulate(SimConfig(t, 50000, s, walk))
        assert goodness_of_fit(walk, t, e) > 0.001


def test_psi_value_examples():
    assert psi_value(canonicalize([0, 0, 0], 6)) == 3
    assert psi_value(canonicalize([3, 0, 0], 6)) == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(0)
    x = rng.integers(-4, 4, (200, 3))
    assert np.array_equal(psi_value(x, 8), psi_value(-x, 8))
    with pytest.raises(InvalidArgument):
        psi_value(x)


def test_psi_exact_mean():
    assert psi_exact_mean(W, 0.0) == 2
    w = make_dg_1xn(6, 13)
    t = 3.0
    theta = np.zeros(w.m)
    theta[0] = 2 * math.pi / 13
    from cutofflab.torus import char_fn_generic

    assert psi_exact_mean(w, t) == pytest.approx(w.m * math.exp(t * (char_fn_generic(w.increments, theta) - 1)), rel=1e-14)
    for t in (1.0, 10.0, 50.0):
        floor = w.m * math.exp(-2 * math.pi**2 * t * float(w.sigma_sq) / (w.m * w.q**2))
        assert psi_exact_mean(w, t) >= floor * (1 - 1e-12)
    assert psi_exact_moments(W, 2.0)[0] == pytest.approx(psi_exact_mean(W, 2.0), abs=1e-13)


def test_estimate_needs_two_samples():
    with pytest.raises(InvalidArgument):
        estimate_psi_stats(SimConfig(1.0, 1, 0, W))


def test_stationary_sampling_variance():
    u = sample_uniform(5, 3, 40000, 11)
    v = psi_value(u, 5)
    st = PsiStats.from_moments(v.mean(), v.var(ddof=1), len(v))
    assert abs(st.mean) <= 4 * st.ci95_halfwidth
    # standard error of a sample variance is about sqrt(2 / N) * var for near-Gaussian data
    assert abs(st.variance - 1.5) <= 4 * 1.5 * math.sqrt(2 / len(v)) * 2


def test_stationary_moments_enumeration():
    for m in (2, 3):
        mean, var = psi_stationary_moments(5, m)
        assert abs(mean) <= 1e-12 and abs(var - m / 2) <= 1e-12


def test_tv_lower_bound_formula():
    a = PsiStats.from_moments(1.0, 1.0, 10)
    assert tv_lower_bound(a, a) == 0.0
    b = PsiStats.from_moments(3.0, 1.0, 10)
    assert tv_lower_bound(b, a) == pytest.approx(0.5)
    z0 = PsiStats.from_moments(0.0, 0.0, 10)
    z1 = PsiStats.from_moments(1.0, 0.0, 10)
    assert tv_lower_bound(z1, z0) == 1.0 and tv_lower_bound(z0, z0) == 0.0
    assert stationary_stats(4).variance == 2.0


def test_exact_moment_bound_below_exact_tv():
    w = make_srw(2, 5)
    mean, var = psi_exact_moments(w, 1.0)
    lb = tv_lower_bound(PsiStats.from_moments(mean, var, 1), stationary_stats(2))
    assert lb <= exact_tv(w, 1.0) + 1e-9


@pytest.mark.nightly
def test_ci_coverage_meta():
    t = 2.0
    exact = psi_exact_mean(W, t)
    hits = 0
    for s in range(100):
        st = estimate_psi_stats(SimConfig(t, 10000, 1000 + s, W))
        hits += abs(st.mean - exact) < 4 * st.ci95_halfwidth
    assert hits >= 99

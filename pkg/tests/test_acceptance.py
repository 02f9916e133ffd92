"""One test per acceptance criterion; the terminal summary prints a pass/fail line for each."""

import math
import time

import numpy as np
import pytest

from cutofflab.bounds import (
    correlation_condition_check,
    dg1xn_quadratic_direct,
    double_sum_constant,
    gaussian_comb_argmax,
    lemma_double_sum_check,
    lemma_sum_check,
    quadratic_decomposition,
    schur_complement_closed,
    schur_complement_numeric,
    schur_sequence,
    table_cell,
    table_ordering,
)
from cutofflab.harness import ExperimentConfig, default_c_grid, run_sweep
from cutofflab.montecarlo import (
    PsiStats,
    SimConfig,
    estimate_psi_stats,
    goodness_of_fit,
    psi_exact_mean,
    psi_exact_moments,
    psi_stationary_moments,
    simulate,
    stationary_stats,
    tv_lower_bound,
)
from cutofflab.spectral import exact_kernel, exact_tv_curve, l2_bound_curve, uniformization_oracle
from cutofflab.torus import moments
from cutofflab.walks import dg1xn_gamma, dg1xn_psi, dgnxn_gamma, dgnxn_psi, make_dg_1xn, make_dg_nxn

TIMES = (0.0, 0.5, 1.0, 5.0, 25.0)


def _instances():
    return [make_dg_1xn(3, 5), make_dg_1xn(4, 7), make_dg_nxn(3, 3)]


def _detail(request, text):
    request.node.user_properties.append(("detail", text))
    print(text)


@pytest.mark.criterion(1)
def test_oracle_equivalence(request):
    start = time.perf_counter()
    worst = 0.0
    for w in _instances():
        for t in TIMES:
            l1 = float(np.abs(exact_kernel(w, t).probs - uniformization_oracle(w, t, 1e-13).probs).sum())
            worst = max(worst, l1)
    elapsed = time.perf_counter() - start
    _detail(request, f"max L1 {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 10


@pytest.mark.criterion(2)
def test_l2_dominance(request):
    start = time.perf_counter()
    worst = math.inf
    for w in _instances() + [make_dg_1xn(5, 11)]:
        tv = exact_tv_curve(w, TIMES)
        l2 = l2_bound_curve(w, TIMES)
        worst = min(worst, float((l2 + 1e-9 - 4 * tv**2).min()))
    elapsed = time.perf_counter() - start
    _detail(request, f"min slack {worst:.3g}, {elapsed:.2f} s")
    assert worst >= 0
    assert elapsed < 30


@pytest.mark.criterion(3)
def test_matrix_identities(request):
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 65):
        worst = max(worst, float(np.abs(dg1xn_gamma(n) @ dg1xn_psi(n) - np.eye(n - 1)).max()))
    for n in range(2, 13):
        m = (n - 1) ** 2
        worst = max(worst, float(np.abs(dgnxn_gamma(n) @ dgnxn_psi(n) - np.eye(m)).max()))
    # second route: the closed-form correlation matrices agree with the enumerated increment covariance
    route = 0.0
    for w, gamma in [(make_dg_1xn(n, 3 * n), dg1xn_gamma(n)) for n in (2, 5, 12)] + [
        (make_dg_nxn(n, 2 * n + 1), dgnxn_gamma(n)) for n in (2, 3, 5)
    ]:
        mom = moments(w.increments)
        route = max(route, float(np.abs(mom.covariance / mom.marginal_variance - gamma).max()))
    elapsed = time.perf_counter() - start
    _detail(request, f"max |Gamma Psi - I| {worst:.2e}, covariance route {route:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-10
    assert route <= 1e-12
    assert elapsed < 20


@pytest.mark.criterion(4)
def test_quadratic_decomposition(request):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for n in (3, 8, 20, 40):
        for _ in range(1000):
            y = rng.integers(-6, 7, n - 1)
            direct = dg1xn_quadratic_direct(y, n)
            if direct == 0:
                assert abs(quadratic_decomposition(y, n)[0]) <= 1e-12
                continue
            worst = max(worst, abs(quadratic_decomposition(y, n)[0] - direct) / abs(direct))
    _detail(request, f"max relative error {worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.criterion(5)
def test_schur_closed_form(request):
    worst = max(abs(schur_complement_numeric(l, k) - schur_complement_closed(l, k)) for l in range(1, 9) for k in range(1, 9))
    n = 6
    seq = schur_sequence(dgnxn_psi(n), table_ordering(n))
    gap = math.inf
    for idx, a in enumerate(seq.a):
        l, k = table_cell(idx, n)
        gap = min(gap, a - l * k / ((l + 1) * (k + 1)))
    _detail(request, f"closed-form error {worst:.2e}, min a-gap {gap:.3g}")
    assert worst <= 1e-10
    assert gap >= -1e-10


@pytest.mark.criterion(6)
def test_lemma_verifiers(request):
    ns = sorted({int(round(x)) for x in np.logspace(0, 5, 61)})
    single = min(r.bound - r.total for r in (lemma_sum_check(n, a) for a in (1.0, 4.0, 100.0) for n in ns))
    dn = sorted({int(round(x)) for x in np.logspace(0, 3, 31)})
    double = min(r.bound - r.total for r in (lemma_double_sum_check(n) for n in dn))
    comb = max(abs(gaussian_comb_argmax(N, c)) for c in (50.0, 200.0, 1000.0) for N in (5, 50))
    _detail(request, f"single-sum slack {single:.3g}, double-sum slack {double:.3g}, comb |argmax| {comb:.1e}")
    assert single >= 0
    assert double >= 0
    assert comb <= 1e-4


@pytest.mark.criterion(7)
def test_lower_bound_validity(request):
    worst = math.inf
    for w in _instances():
        tv = exact_tv_curve(w, TIMES)
        for t, d in zip(TIMES, tv):
            mean, var = psi_exact_moments(w, t)
            lb = tv_lower_bound(PsiStats.from_moments(mean, var, 1), stationary_stats(w.m))
            worst = min(worst, d + 1e-9 - lb)
    _detail(request, f"min slack {worst:.3g}")
    assert worst >= 0


@pytest.mark.criterion(8)
def test_psi_stationary_moments(request):
    worst = 0.0
    for m in (2, 3):
        mean, var = psi_stationary_moments(5, m)
        worst = max(worst, abs(mean), abs(var - m / 2))
    _detail(request, f"max deviation {worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.criterion(9)
def test_simulation_fidelity(request):
    w = make_dg_1xn(3, 5)
    t = 4.0
    pvals = []
    for s in (1, 2, 3):
        pvals.append(goodness_of_fit(w, t, simulate(SimConfig(t, 10**5, s, w))))
    st = estimate_psi_stats(SimConfig(t, 10**4, 7, w))
    exact = psi_exact_mean(w, t)
    ratio = abs(st.mean - exact) / st.ci95_halfwidth
    _detail(request, "p-values " + ", ".join(f"{p:.3f}" for p in pvals) + f"; mean gap {ratio:.2f} CI half-widths")
    assert min(pvals) > 0.001
    assert ratio < 4


@pytest.mark.criterion(10)
def test_cutoff_signature(request):
    start = time.perf_counter()
    cfg = ExperimentConfig(walk="dg1xn", n=[4, 6, 8], q_factor=2, grid={"kind": "theory", "c": default_c_grid()}, epsilon=0.25)
    report = run_sweep(cfg)
    widths = [report.profile(n).normalized_width for n in (4, 6, 8)]
    d_up = [report.profile(n).d_at_t_upper for n in (4, 6, 8)]
    elapsed = time.perf_counter() - start
    _detail(
        request,
        "normalized widths " + ", ".join(f"{x:.4f}" for x in widths)
        + "; d(t_upper) " + ", ".join(f"{x:.4f}" for x in d_up) + f"; {elapsed:.1f} s",
    )
    assert all(x is not None for x in widths)
    assert widths[0] > widths[1] > widths[2]
    assert all(d <= 0.25 + 0.2 for d in d_up)
    assert elapsed < 300


@pytest.mark.criterion(11)
def test_correlation_condition(request):
    g = lambda a: double_sum_constant() / a**0.25
    ns = range(3, 11)
    slack = math.inf
    for alpha in (1.0, 16.0):
        rep = correlation_condition_check([dgnxn_psi(n) for n in ns], alpha, g, [table_ordering(n) for n in ns])
        assert rep.passed, rep.failures
        ident = correlation_condition_check([np.eye(m) for m in range(1, 30)], alpha, lambda a: 1 / a)
        assert ident.passed, ident.failures
        slack = min(slack, rep.min_slack, ident.min_slack)
    _detail(request, f"min slack {slack:.3g}")

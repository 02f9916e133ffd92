import itertools
import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from cutofflab.errors import InvalidTime, TooLarge
from cutofflab.spectral import (
    dirichlet_form,
    eigenvalue_at,
    exact_kernel,
    exact_tv,
    exact_tv_curve,
    l2_bound,
    l2_bound_curve,
    lattice_reduce,
    poisson_window,
    state_coords,
    uniformization_oracle,
)
from cutofflab.torus import TorusVector, char_fn_generic
from cutofflab.walks import char_fn_closed, make_dg_1xn, make_dg_nxn, make_srw

SMALL = [make_dg_1xn(3, 5), make_dg_1xn(4, 6), make_dg_nxn(3, 3), make_srw(2, 7), make_dg_1xn(2, 5)]


def test_eigenvalue_examples():
    w = make_dg_1xn(2, 4)
    assert eigenvalue_at(w, [0], 3.0) == 1.0
    assert eigenvalue_at(w, TorusVector((1,), 4), 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    q, t = 9, 2.5
    srw = make_srw(2, q)
    assert eigenvalue_at(srw, [1, 0], t) == pytest.approx(math.exp(t * ((math.cos(2 * math.pi / q) + 1) / 2 - 1)), rel=1e-14)
    with pytest.raises(InvalidTime):
        eigenvalue_at(w, [1], -1.0)


@pytest.mark.parametrize("walk", SMALL)
def test_l2_extremes(walk):
    assert l2_bound(walk, 0.0).l2_bound_sq == walk.lattice_size - 1
    big = 1e6 * walk.q**2 * walk.m
    assert 0 <= l2_bound(walk, big).l2_bound_sq <= 1e-6


def test_l2_against_nested_loop():
    w = make_dg_1xn(3, 5)
    t = 5.0
    ref = 0.0
    for y1, y2 in itertools.product(range(-2, 3), repeat=2):
        if (y1, y2) == (0, 0):
            continue
        phi = char_fn_closed(w, 2 * np.pi * np.array([y1, y2]) / 5)
        ref += math.exp(2 * t * (phi - 1))
    assert l2_bound(w, t).l2_bound_sq == pytest.approx(ref, abs=1e-12)


def test_l2_chunked_and_threads_deterministic():
    w = make_dg_1xn(5, 8)
    ts = [0.3, 2.0, 9.0]
    dense = l2_bound_curve(w, ts, threads=1)

    def reducer(prefix, phi):
        out = []
        for t in ts:
            v = np.exp(2 * t * (phi - 1.0))
            if not any(prefix):
                v[(0,) * phi.ndim] = 0.0
            out.append(v.sum())
        return np.array(out)

    for chunk, threads in [(64, 1), (64, 3), (8, 2)]:
        chunked = lattice_reduce(w.increments, reducer, chunk_points=chunk, threads=threads)
        assert np.allclose(chunked, dense, rtol=1e-13, atol=0)
    a = lattice_reduce(w.increments, reducer, chunk_points=64, threads=1)
    b = lattice_reduce(w.increments, reducer, chunk_points=64, threads=4)
    assert np.array_equal(a, b)


def test_srw_product_path_matches_lattice():
    w = make_srw(4, 9)
    ts = [0.0, 0.7, 3.0, 20.0]
    a = l2_bound_curve(w, ts, method="product")
    b = l2_bound_curve(w, ts, method="lattice")
    assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(b).max())


def test_l2_budget():
    with pytest.raises(TooLarge):
        l2_bound(make_dg_nxn(5, 11), 1.0)


def test_kernel_examples():
    w = make_dg_1xn(3, 3)
    k0 = exact_kernel(w, 0.0)
    assert k0.probs[0, 0] == pytest.approx(1.0) and k0.probs.sum() == pytest.approx(1.0)
    assert np.abs(exact_kernel(w, 2.0).probs - uniformization_oracle(w, 2.0).probs).max() <= 1e-9
    far = exact_kernel(w, 500.0).probs
    assert np.abs(far - 1 / 9).max() <= 1e-12


def test_oracle_examples():
    w = make_dg_1xn(2, 5)
    assert np.array_equal(uniformization_oracle(w, 0.0).probs, np.eye(1, 5)[0])
    assert np.abs(uniformization_oracle(w, 1.0, 1e-12).probs - exact_kernel(w, 1.0).probs).max() <= 1e-10
    with pytest.raises(TooLarge):
        uniformization_oracle(make_dg_1xn(6, 11), 1.0)


def test_poisson_window_tail():
    for t in (0.0, 0.5, 7.0, 300.0):
        lo, hi, w = poisson_window(t, 1e-13)
        assert lo == 0
        assert 1 - w.sum() < 1e-13 + 1e-12
        assert np.all(np.cumsum(w) <= 1 + 1e-12)


def test_exact_tv_examples():
    w = make_dg_1xn(3, 5)
    assert exact_tv(w, 0.0) == pytest.approx(1 - 1 / 25, abs=1e-15)
    assert exact_tv(w, 1e4) <= 1e-12
    for t in (1.0, 5.0, 25.0):
        assert abs(exact_tv(w, t) - uniformization_oracle(w, t).tv_to_uniform()) <= 1e-8


@pytest.mark.parametrize("walk", SMALL)
def test_kernel_invariants(walk):
    ts = np.linspace(0, 40, 41)
    tv = exact_tv_curve(walk, ts)
    l2 = l2_bound_curve(walk, ts)
    assert np.all(4 * tv**2 <= l2 + 1e-9)
    assert np.all(np.diff(tv) <= 1e-10)
    assert np.all(tv <= 1 - walk.lattice_size ** -1.0 + 1e-15)
    for t in (0.5, 4.0):
        h = exact_kernel(walk, t).probs
        idx = np.ix_(*[(-np.arange(walk.q)) % walk.q] * walk.m)
        assert np.abs(h - h[idx]).max() <= 1e-12
        ref = uniformization_oracle(walk, t, 1e-13).probs
        assert np.abs(h - ref).sum() <= max(1e-9, 10 * 1e-13)


def test_dirichlet_constant_and_eigen():
    w = make_dg_1xn(4, 7)
    assert abs(dirichlet_form(w, np.ones((7,) * 3))) <= 1e-15
    rng = np.random.default_rng(3)
    coords = state_coords(7, 3)
    for _ in range(100):
        y = rng.integers(-3, 4, 3)
        if not y.any():
            continue
        f = np.cos(2 * np.pi * (coords @ y) / 7)
        f = (f - f.mean()) / f.std()
        val = dirichlet_form(w, f)
        assert abs(val - (1 - char_fn_generic(w.increments, 2 * np.pi * y / 7))) <= 1e-10


def test_dirichlet_half_interval_reference():
    q = 9
    w = make_dg_1xn(2, q)
    f = (np.arange(q) < q // 2).astype(float)
    ref = 0.0
    for x in range(q):
        for step in (1, -1):
            ref += 0.5 * (1 / q) * 0.5 * (f[x] - f[(x + step) % q]) ** 2
    assert dirichlet_form(w, f) == pytest.approx(ref, abs=1e-12)
    assert dirichlet_form(w, lambda c: (c[..., 0] < 0).astype(float)) >= -1e-12


@seed(2024)
@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(3, 7), st.floats(0, 30))
def test_dominance_property(n, q, t):
    w = make_dg_1xn(n, q)
    tv = exact_tv(w, t)
    assert 4 * tv * tv <= l2_bound(w, t).l2_bound_sq + 1e-9

"""Permutation-reduced exact computations for the 1 x n table walk.

Append the untracked entry z_n = -(x_1 + ... + x_{n-1}) to a state x. The
move "+1 at i, -1 at j" on the full vector z commutes with permuting the n
entries, and the uniform law is permutation invariant. So the law of the
walk started at 0 is constant on permutation orbits, i.e. on multisets of
n residues with sum 0 mod q, and the walk lumps to a chain on those
multisets. Total variation to uniform is computed exactly on the lumped
chain.

The l2 sum uses the same symmetry on the dual side. Phi depends on y only
through the differences y_j - y_k (with y_n = 0), so shifting all n entries by
a common constant c gives a q-to-1 map from Z_q^n onto the dual lattice.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, TooLarge
from .spectral import _times, poisson_window

ORBIT_BUDGET = 5 * 10**6


def _multisets(n: int, q: int) -> np.ndarray:
    count = math.comb(q + n - 1, n)
    if count > ORBIT_BUDGET:
        raise TooLarge(f"{count} multisets exceed the orbit budget {ORBIT_BUDGET}")
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations_with_replacement(range(q), n)),
        dtype=np.int64,
        count=count * n,
    )
    return flat.reshape(count, n)


def _multiplicity(rows: np.ndarray, q: int) -> np.ndarray:
    """n! / prod(count_v!) for each sorted row, as float (exact below 2**53)."""
    n_rows, n = rows.shape
    counts = np.zeros((n_rows, q), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(n_rows), n), rows.ravel()), 1)
    log_fact = np.array([math.lgamma(k + 1) for k in range(n + 1)])
    return np.rint(np.exp(log_fact[n] - log_fact[counts].sum(axis=1)))


def _keys(rows: np.ndarray, q: int) -> np.ndarray:
    weights = q ** np.arange(rows.shape[1], dtype=np.int64)
    return rows @ weights


def _check(n: int, q: int) -> None:
    if n < 2 or q < 3:
        raise InvalidArgument("need n >= 2 and q >= 3")
    if float(q) ** n >= 2.0**62:
        raise TooLarge("orbit keys would overflow 64 bits")


def dg1xn_l2_curve(n: int, q: int, ts) -> np.ndarray:
    """Sum over y != 0 of exp(2t(Phi(2 pi y/q) - 1)) for the 1 x n walk, for each t."""
    _check(n, q)
    ts = _times(ts)
    rows = _multisets(n, q)
    mult = _multiplicity(rows, q)
    cos_tab = np.cos(2 * np.pi * np.arange(q) / q)
    phi = np.zeros(len(rows))
    for j, k in itertools.combinations(range(n), 2):
        phi += cos_tab[(rows[:, j] - rows[:, k]) % q]
    phi /= math.comb(n, 2)
    constant = rows[:, 0] == rows[:, -1]  # these are the q preimages of y = 0
    mult = np.where(constant, 0.0, mult)
    out = []
    for t in ts:
        terms = mult * np.exp(2 * t * (phi - 1.0))
        out.append(math.fsum(terms) / q)
    return np.array(out)


class DG1xNOrbitChain:
    """The 1 x n walk lumped onto multisets of table entries."""

    def __init__(self, n: int, q: int):
        _check(n, q)
        self.n, self.q = n, q
        rows = _multisets(n, q)
        rows = rows[rows.sum(axis=1) % q == 0]
        self.rows = rows
        self.keys = _keys(rows, q)  # increasing, since rows come out lexicographically sorted
        order = np.argsort(self.keys)
        if not np.array_equal(order, np.arange(len(order))):
            self.rows, self.keys = rows[order], self.keys[order]
        self.sizes = _multiplicity(self.rows, q)
        self.stationary = self.sizes / float(q) ** (n - 1)
        self.start = int(self.lookup(np.zeros((1, n), dtype=np.int64))[0])
        self._pt = self._transition().T.tocsr()

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, rows: np.ndarray) -> np.ndarray:
        """Orbit indices of arbitrary (unsorted) full vectors with entries mod q."""
        srt = np.sort(np.asarray(rows, dtype=np.int64) % self.q, axis=1)
        keys = _keys(srt, self.q)
        idx = np.searchsorted(self.keys, keys)
        if np.any(idx >= len(self.keys)) or np.any(self.keys[np.minimum(idx, len(self.keys) - 1)] != keys):
            raise InvalidArgument("vector is not a valid table state (entries must sum to 0 mod q)")
        return idx

    def _transition(self) -> sp.csr_matrix:
        n, N = self.n, len(self.rows)
        p = 1.0 / (n * (n - 1))
        src, dst = [], []
        for i, j in itertools.permutations(range(n), 2):
            moved = self.rows.copy()
            moved[:, i] += 1
            moved[:, j] -= 1
            src.append(np.arange(N))
            dst.append(self.lookup(moved))
        src, dst = np.concatenate(src), np.concatenate(dst)
        return sp.csr_matrix((np.full(len(src), p), (src, dst)), shape=(N, N))

    def lump(self, dense: np.ndarray) -> np.ndarray:
        """Sum a residue-indexed law on Z_q^{n-1} over orbits."""
        m = self.n - 1
        if dense.shape != (self.q,) * m:
            raise InvalidArgument(f"expected shape {(self.q,) * m}")
        grid = np.indices(dense.shape).reshape(m, -1).T
        full = np.concatenate([grid, (-grid.sum(axis=1, keepdims=True)) % self.q], axis=1)
        return np.bincount(self.lookup(full), weights=dense.ravel(), minlength=len(self))

    def law_curve(self, ts, eps: float = 1e-13) -> np.ndarray:
        """Orbit law of the walk started at 0, one row per time, by Poisson mixing of P^k.

        Each time keeps the window of Poisson terms that drops less than
        ``eps`` of mass, so the returned rows are accurate to eps in L1.
        """
        ts = _times(ts)
        windows = [poisson_window(t, eps, lower=True) for t in ts]
        k_max = max(hi for _, hi, _ in windows)
        out = np.zeros((len(ts), len(self)))
        p = np.zeros(len(self))
        p[self.start] = 1.0
        for k in range(k_max + 1):
            for r, (lo, hi, w) in enumerate(windows):
                if lo <= k <= hi:
                    out[r] += w[k - lo] * p
            if k < k_max:
                p = self._pt @ p
        return out

    def tv_curve(self, ts, eps: float = 1e-13) -> np.ndarray:
        laws = self.law_curve(ts, eps=eps)
        return 0.5 * np.abs(laws - self.stationary[None, :]).sum(axis=1)

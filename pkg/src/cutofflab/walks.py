"""Concrete walks: Diaconis-Gangolli on 1 x n and n x n tables, simple random walk.

Tracked coordinates: the 1 x n walk keeps the first n - 1 entries of the
table; the n x n walk keeps the upper-left (n-1) x (n-1) block, flattened in
row-major order (the whole first row, then the second row, ...).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidArgument, SingularCorrelation, UnsupportedClosedForm
from .torus import IncrementDistribution, moments

KINDS = ("dg1xn", "dgnxn", "srw", "custom")


@dataclass(frozen=True)
class WalkSpec:
    increments: IncrementDistribution
    m: int
    q: int
    r: int
    sigma_sq: Fraction | float | None
    kind: str
    n: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown walk kind {self.kind!r}")

    @property
    def lattice_size(self) -> int:
        return self.q**self.m

    @property
    def label(self) -> str:
        if self.kind == "custom":
            return f"custom(m={self.m},q={self.q})"
        return f"{self.kind}(n={self.n},q={self.q})"


def _check(n: int, q: int, n_min: int) -> None:
    if int(n) != n or n < n_min:
        raise InvalidArgument(f"n must be an integer >= {n_min}, got {n!r}")
    if int(q) != q or q < 3:
        raise InvalidArgument(f"q must be an integer >= 3, got {q!r}")


def make_dg_1xn(n: int, q: int) -> WalkSpec:
    """1 x n table walk: +1/-1 on an ordered pair of distinct coordinates."""
    _check(n, q, 2)
    m = n - 1
    vectors = []
    for i, j in itertools.permutations(range(n), 2):
        v = [0] * m
        if i < m:
            v[i] += 1
        if j < m:
            v[j] -= 1
        vectors.append(v)
    inc = IncrementDistribution.uniform(vectors, q)
    return WalkSpec(inc, m, q, 2, Fraction(2 * (n - 1), n), "dg1xn", n)


def make_dg_nxn(n: int, q: int) -> WalkSpec:
    """n x n table walk: add +-T(i, i', j, j') on a uniformly chosen 2 x 2 minor."""
    _check(n, q, 2)
    b = n - 1
    m = b * b
    vectors = []
    for i, i2 in itertools.combinations(range(n), 2):
        for j, j2 in itertools.combinations(range(n), 2):
            v = [0] * m
            for (r, c), s in (((i, j), 1), ((i2, j2), 1), ((i, j2), -1), ((i2, j), -1)):
                if r < b and c < b:
                    v[r * b + c] += s
            vectors.append(v)
            vectors.append([-x for x in v])
    inc = IncrementDistribution.uniform(vectors, q)
    if len(inc) != len(vectors):
        raise AssertionError("projected n x n moves are not distinct")
    return WalkSpec(inc, m, q, 4, Fraction(4 * (n - 1) ** 2, n * n), "dgnxn", n)


def make_srw(n: int, q: int) -> WalkSpec:
    _check(n, q, 1)
    vectors = []
    for k in range(n):
        for s in (1, -1):
            v = [0] * n
            v[k] = s
            vectors.append(v)
    inc = IncrementDistribution.uniform(vectors, q)
    return WalkSpec(inc, n, q, 1, Fraction(1), "srw", n)


def make_custom(increments: IncrementDistribution) -> WalkSpec:
    mom = moments(increments)
    sigma = None
    if mom.equivariant:
        sigma = mom.sigma_sq
    return WalkSpec(increments, increments.m, increments.q, increments.max_l1(), sigma, "custom", None)


def make_walk(kind: str, n: int | None = None, q: int | None = None, increments=None) -> WalkSpec:
    if kind == "dg1xn":
        return make_dg_1xn(n, q)
    if kind == "dgnxn":
        return make_dg_nxn(n, q)
    if kind == "srw":
        return make_srw(n, q)
    if kind == "custom":
        if increments is None:
            raise InvalidArgument("custom walk needs an increment distribution")
        return make_custom(increments)
    raise InvalidArgument(f"unknown walk kind {kind!r}")


def _dg1xn_char(n: int, th: np.ndarray) -> np.ndarray:
    # th: (N, n-1)
    s = np.cos(th).sum(axis=1)
    diff = th[:, :, None] - th[:, None, :]
    iu = np.triu_indices(n - 1, k=1)
    s = s + np.cos(diff[:, iu[0], iu[1]]).sum(axis=1)
    return s / math.comb(n, 2)


def _dgnxn_char(n: int, th: np.ndarray) -> np.ndarray:
    b = n - 1
    T = th.reshape(-1, b, b)
    iu = np.triu_indices(b, k=1)
    # row differences theta_{ij} - theta_{lj} for l < i, all j
    rows = T[:, iu[1], :] - T[:, iu[0], :]  # (N, pairs, b)
    cols = T[:, :, iu[1]] - T[:, :, iu[0]]  # (N, b, pairs)
    four = rows[:, :, iu[1]] - rows[:, :, iu[0]]  # (N, pairs, pairs)
    total = (
        np.cos(four).sum(axis=(1, 2))
        + np.cos(rows).sum(axis=(1, 2))
        + np.cos(cols).sum(axis=(1, 2))
        + np.cos(T).sum(axis=(1, 2))
    )
    return total / math.comb(n, 2) ** 2


def char_fn_closed(walk: WalkSpec, theta) -> float | np.ndarray:
    """Closed-form characteristic function for the named walks."""
    th = np.asarray(theta, dtype=float)
    single = th.ndim == 1
    if th.shape[-1] != walk.m or th.ndim not in (1, 2):
        raise InvalidArgument(f"theta must have trailing dimension {walk.m}")
    th2 = th.reshape(-1, walk.m)
    if walk.kind == "dg1xn":
        out = _dg1xn_char(walk.n, th2)
    elif walk.kind == "dgnxn":
        out = _dgnxn_char(walk.n, th2)
    elif walk.kind == "srw":
        out = np.cos(th2).mean(axis=1)
    else:
        raise UnsupportedClosedForm("custom walks have no closed-form characteristic function")
    return float(out[0]) if single else out


@dataclass(frozen=True)
class CorrelationModel:
    gamma: np.ndarray
    psi: np.ndarray
    source: str  # "closed-form" or "numeric-inverse"

    def residual(self) -> float:
        """max |Gamma Psi - I|."""
        m = self.gamma.shape[0]
        return float(np.abs(self.gamma @ self.psi - np.eye(m)).max())


def dg1xn_gamma(n: int) -> np.ndarray:
    m = n - 1
    if m == 1:
        return np.ones((1, 1))
    g = np.full((m, m), -1.0 / (n - 1))
    np.fill_diagonal(g, 1.0)
    return g


def dg1xn_psi(n: int) -> np.ndarray:
    m = n - 1
    return (n - 1) / n * (np.eye(m) + np.ones((m, m)))


def _table_relation(n: int) -> np.ndarray:
    """0 on the diagonal, 1 for cells sharing exactly one of row/column, 2 otherwise."""
    b = n - 1
    r, c = np.divmod(np.arange(b * b), b)
    same_r = r[:, None] == r[None, :]
    same_c = c[:, None] == c[None, :]
    rel = np.full((b * b, b * b), 2, dtype=np.int8)
    rel[same_r ^ same_c] = 1
    rel[same_r & same_c] = 0
    return rel


def dgnxn_gamma(n: int) -> np.ndarray:
    rel = _table_relation(n)
    if n == 2:
        return np.ones((1, 1))
    vals = np.array([1.0, -1.0 / (n - 1), 1.0 / (n - 1) ** 2])
    return vals[rel]


def dgnxn_psi(n: int) -> np.ndarray:
    c = (n - 1) ** 2 / n**2
    vals = np.array([4 * c, 2 * c, c])
    return vals[_table_relation(n)]


def correlation_model(walk: WalkSpec) -> CorrelationModel:
    if walk.kind == "dg1xn":
        return CorrelationModel(dg1xn_gamma(walk.n), dg1xn_psi(walk.n), "closed-form")
    if walk.kind == "dgnxn":
        return CorrelationModel(dgnxn_gamma(walk.n), dgnxn_psi(walk.n), "closed-form")
    mom = moments(walk.increments)
    if not mom.equivariant:
        raise InvalidArgument("correlation model needs equal marginal variances")
    if mom.marginal_variance == 0:
        raise SingularCorrelation("increment has zero variance")
    gamma = mom.covariance / mom.marginal_variance
    try:
        psi = np.linalg.solve(gamma, np.eye(walk.m))
    except np.linalg.LinAlgError as exc:
        raise SingularCorrelation(str(exc)) from exc
    model = CorrelationModel(gamma, psi, "numeric-inverse")
    if not np.isfinite(psi).all() or model.residual() > 1e-8:
        raise SingularCorrelation(f"correlation matrix is numerically singular (residual {model.residual():.3g})")
    return model

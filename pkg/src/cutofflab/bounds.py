"""Closed-form mixing-time bounds and numeric checks of their ingredients.

Covers the alpha(epsilon) solvers, upper and lower bound times, the
sequential quadratic-form decomposition, Schur complement sequences of
precision matrices, the correlation and decay conditions, and numeric
verifiers for the summation and Gaussian-comb lemmas.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidArgument, InvalidRegime, NotPositiveDefinite
from .spectral import L2_BUDGET, _check_time, lattice_reduce, residue_grid, resolve_threads
from .walks import WalkSpec, dg1xn_gamma

E = math.e


def dg1xn_constant() -> float:
    return 4 + 4 * math.exp(2 / E)


def dgnxn_constant() -> float:
    return 6 + 12 * math.exp(4 / E) + 12 * math.exp(8 / E) + 6 * math.exp(32 / E)


def single_sum_constant() -> float:
    return 1 + math.exp(2 / E)


def double_sum_constant() -> float:
    return 1 + 2 * math.exp(4 / E) + 2 * math.exp(8 / E) + math.exp(32 / E)


# ---------------------------------------------------------------- alpha


@dataclass(frozen=True)
class Flavor:
    """Which alpha definition and time formulas apply.

    ``name`` is "dg1xn", "dgnxn" or "general"; the general flavor needs the
    bounding function ``g`` and the sup-norm ``psi_sup`` of the precision
    matrices.
    """

    name: str
    g: Callable[[float], float] | None = None
    psi_sup: float | None = None

    def __post_init__(self):
        if self.name not in ("dg1xn", "dgnxn", "general"):
            raise InvalidArgument(f"unknown flavor {self.name!r}")
        if self.name == "general" and (self.g is None or self.psi_sup is None):
            raise InvalidArgument("general flavor needs g and psi_sup")

    def exponent(self, z: float) -> float:
        """K(z) in the defining condition 4 eps^2 >= exp(K(z)) - 1."""
        if self.name == "dg1xn":
            return dg1xn_constant() / math.sqrt(z)
        if self.name == "dgnxn":
            return dgnxn_constant() / z**0.25
        return (2 + self.psi_sup) * self.g(z)


DG1XN = Flavor("dg1xn")
DGNXN = Flavor("dgnxn")


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise InvalidArgument(f"epsilon must lie in (0, 1), got {epsilon}")
    return epsilon


def alpha_for_epsilon(epsilon: float, flavor: Flavor, rtol: float = 1e-10) -> float:
    """Smallest z >= 1 with 4 eps^2 >= exp(K(z)) - 1, by bisection in log z."""
    epsilon = _check_epsilon(epsilon)
    # exp(K) - 1 <= 4 eps^2  is compared as  K <= log(1 + 4 eps^2)  to avoid overflow
    target = math.log1p(4 * epsilon * epsilon)

    def ok(z: float) -> bool:
        return flavor.exponent(z) <= target

    if ok(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > 1e300:
            raise InvalidArgument("bounding function does not decay; no alpha found")
    while hi / lo - 1 > rtol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def alpha_closed_form(epsilon: float, flavor: Flavor) -> float:
    """Direct inversion for the two table flavors: z = (C / log(1 + 4 eps^2))^p, clamped at 1."""
    epsilon = _check_epsilon(epsilon)
    denom = math.log1p(4 * epsilon * epsilon)
    if flavor.name == "dg1xn":
        z = (dg1xn_constant() / denom) ** 2
    elif flavor.name == "dgnxn":
        z = (dgnxn_constant() / denom) ** 4
    else:
        raise InvalidArgument("no closed form for the general flavor")
    return max(z, 1.0)


# ---------------------------------------------------------------- theorem times


@dataclass(frozen=True)
class TheoremTimes:
    t_upper: float
    t_lower: float | None  # None when the lower-bound bracket is not positive
    alpha: float
    gamma: float
    epsilon: float
    flavor: str
    variant: str = "theorem"

    @property
    def lower_defined(self) -> bool:
        return self.t_lower is not None


def general_upper_time(n: int, q: int, sigma_sq: float, r: int, alpha: float) -> float:
    """n q^2 log(alpha n) / (4 pi^2 sigma^2) * (1 - r^2/(12 q))^-1."""
    if r * r >= 12 * q:
        raise InvalidRegime(f"r^2 = {r * r} must be below 12 q = {12 * q}")
    if sigma_sq <= 0:
        raise InvalidArgument("sigma^2 must be positive")
    return n * q * q * math.log(alpha * n) / (4 * math.pi**2 * sigma_sq) / (1 - r * r / (12 * q))


def general_lower_time(n: int, q: int, sigma_sq: float, epsilon: float) -> float | None:
    gamma = (1 / _check_epsilon(epsilon) - 1) / 5
    bracket = math.log(n) + math.log(gamma)
    if bracket <= 0:
        return None
    return n * q * q / (4 * math.pi**2 * float(sigma_sq)) * bracket


VARIANTS = ("theorem", "proof", "general-formula")


def theorem_times(
    n: int,
    q: int,
    epsilon: float,
    flavor: Flavor | str,
    *,
    variant: str = "theorem",
    sigma_sq: float | None = None,
    r: int | None = None,
) -> TheoremTimes:
    """Upper and lower bound times for the chosen flavor.

    ``variant`` selects the upper-time prefactor for the 1 x n walk:
    "theorem" uses (1 - 1/(3q))^-1, "proof" uses (1 - 3/q)^-1, and
    "general-formula" substitutes sigma^2 = 2(n-1)/n, r = 2 into the general
    formula. The general flavor requires ``sigma_sq`` and ``r``.
    """
    if isinstance(flavor, str):
        flavor = {"dg1xn": DG1XN, "dgnxn": DGNXN}.get(flavor) or Flavor(flavor)
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}")
    if n < 2 or q < 3:
        raise InvalidArgument("need n >= 2 and q >= 3")
    epsilon = _check_epsilon(epsilon)
    alpha = alpha_for_epsilon(epsilon, flavor)
    gamma = (1 / epsilon - 1) / 5
    pi2 = math.pi**2

    if flavor.name == "dg1xn":
        base = n * q * q / (8 * pi2)
        if variant == "theorem":
            t_up = base * math.log(alpha * n) / (1 - 1 / (3 * q))
        elif variant == "proof":
            if q <= 3:
                raise InvalidRegime("proof-variant prefactor needs q > 3")
            t_up = base * math.log(alpha * n) / (1 - 3 / q)
        else:
            t_up = general_upper_time(n, q, 2 * (n - 1) / n, 2, alpha)
        bracket = math.log(n) + math.log1p(-1 / n) + math.log(gamma)
        t_low = base * bracket if bracket > 0 else None
    elif flavor.name == "dgnxn":
        if variant != "theorem":
            raise InvalidArgument("only the theorem variant exists for n x n tables")
        if 4 >= 3 * q:
            raise InvalidRegime("prefactor needs q > 4/3")
        base = n * n * q * q / (8 * pi2)
        t_up = base * math.log(math.sqrt(alpha) * (n - 1)) / (1 - 4 / (3 * q))
        bracket = math.log(n) + math.log1p(-1 / n) + 0.5 * math.log(gamma)
        t_low = base * bracket if bracket > 0 else None
    else:
        if sigma_sq is None or r is None:
            raise InvalidArgument("general flavor needs sigma_sq and r")
        t_up = general_upper_time(n, q, float(sigma_sq), r, alpha)
        t_low = general_lower_time(n, q, float(sigma_sq), epsilon)
    return TheoremTimes(t_up, t_low, alpha, gamma, epsilon, flavor.name, variant)


def theory_time(walk: WalkSpec, epsilon: float, variant: str = "theorem") -> TheoremTimes:
    """Theorem times for a concrete walk; custom/srw walks use the general formulas."""
    if walk.kind in ("dg1xn", "dgnxn"):
        return theorem_times(walk.n, walk.q, epsilon, walk.kind, variant=variant)
    if walk.sigma_sq is None:
        raise InvalidArgument("general times need an equivariant walk")
    flavor = Flavor("general", g=lambda a: 1 / a, psi_sup=1.0) if walk.kind == "srw" else None
    if flavor is None:
        from .walks import correlation_model

        model = correlation_model(walk)
        flavor = Flavor("general", g=lambda a: 1 / a, psi_sup=float(np.abs(model.psi).max()))
    n = walk.m
    return theorem_times(n, walk.q, epsilon, flavor, sigma_sq=float(walk.sigma_sq), r=walk.r)


# ---------------------------------------------------------------- quadratic form


def quadratic_decomposition(y: Sequence[float], n: int) -> tuple[float, np.ndarray]:
    """y^T Gamma y for the 1 x n correlation matrix as a weighted sum of squared residuals.

    Returns (value, terms) with terms[0] = y_1^2 / 2 and
    terms[k-1] = (y_k - mean(y_1..y_{k-1}))^2 k/(k+1); value = n/(n-1) * sum(terms).
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (n - 1,):
        raise InvalidArgument(f"y must have length n - 1 = {n - 1}")
    terms = np.empty(n - 1)
    if n - 1 == 0:
        return 0.0, terms
    terms[0] = 0.5 * y[0] ** 2
    prefix = np.cumsum(y)
    k = np.arange(2, n)
    mu = prefix[:-1] / k
    terms[1:] = (y[1:] - mu) ** 2 * k / (k + 1)
    return n / (n - 1) * math.fsum(terms), terms


def direct_quadratic(y: Sequence[float], gamma: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    return float(y @ gamma @ y)


def dg1xn_quadratic_direct(y: Sequence[float], n: int) -> float:
    return direct_quadratic(y, dg1xn_gamma(n))


# ---------------------------------------------------------------- Schur sequences


@dataclass(frozen=True)
class SchurSequence:
    a: np.ndarray
    psi_sup_norm: float
    g_alpha: float | None = None

    def __len__(self) -> int:
        return len(self.a)


def schur_sequence(psi: np.ndarray, ordering: Sequence[int] | None = None, g_alpha: float | None = None) -> SchurSequence:
    """a_k = inverse Schur complement of the leading (k-1)-block inside the leading k-block.

    With psi = L L^T (Cholesky), that Schur complement is L_kk^2, so one
    factorisation gives the whole sequence.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise InvalidArgument("psi must be square")
    if not np.allclose(psi, psi.T, rtol=0, atol=1e-12 * max(1.0, np.abs(psi).max())):
        raise NotPositiveDefinite("psi is not symmetric")
    if ordering is not None:
        order = np.asarray(ordering)
        if sorted(order.tolist()) != list(range(psi.shape[0])):
            raise InvalidArgument("ordering must be a permutation")
        psi = psi[np.ix_(order, order)]
    try:
        L = np.linalg.cholesky(psi)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    d = np.diag(L) ** 2
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPositiveDefinite("nonpositive pivot")
    return SchurSequence(1.0 / d, float(np.abs(psi).max()), g_alpha)


def table_ordering(n: int) -> np.ndarray:
    """Row-by-row ordering of the tracked (n-1) x (n-1) cells (our coordinates already use it)."""
    return np.arange((n - 1) ** 2)


def table_cell(index: int, n: int) -> tuple[int, int]:
    """1-based (row, column) of a tracked coordinate of the n x n walk."""
    r, c = divmod(int(index), n - 1)
    return r + 1, c + 1


def block_matrix(l: int, k: int) -> np.ndarray:
    """Rescaled precision block over the first l rows and k columns of a table.

    Cells are ordered row by row, so cell (l, k) comes last. Entries are 4 on
    the diagonal, 2 for cells sharing exactly one of row or column, 1 otherwise.
    """
    if l < 1 or k < 1:
        raise InvalidArgument("l and k must be >= 1")
    r, c = np.divmod(np.arange(l * k), k)
    same_r = r[:, None] == r[None, :]
    same_c = c[:, None] == c[None, :]
    out = np.ones((l * k, l * k))
    out[same_r ^ same_c] = 2.0
    out[same_r & same_c] = 4.0
    return out


def schur_complement_numeric(l: int, k: int) -> float:
    """A22 - A21 A11^{-1} A12 for the block matrix, by explicit elimination."""
    A = block_matrix(l, k)
    if A.shape[0] == 1:
        return float(A[0, 0])
    A11, A12, A21, A22 = A[:-1, :-1], A[:-1, -1], A[-1, :-1], A[-1, -1]
    return float(A22 - A21 @ np.linalg.solve(A11, A12))


def schur_complement_closed(l: int, k: int) -> float:
    if int(l) != l or int(k) != k or l < 1 or k < 1:
        raise InvalidArgument("l and k must be integers >= 1")
    return 1 + (l + k + 1) / (l * k)


# ---------------------------------------------------------------- conditions


@dataclass
class ConditionRow:
    dim: int
    total: float
    g_alpha: float
    slack: float  # g(alpha) - total; negative means violation
    worst_k: int | None = None


@dataclass
class CorrelationReport:
    alpha: float
    psi_sup: float
    passed: bool
    rows: list[ConditionRow] = field(default_factory=list)
    failures: list[tuple[int, int]] = field(default_factory=list)  # (family index, first k where sum exceeds g)

    @property
    def min_slack(self) -> float:
        return min(r.slack for r in self.rows)


def correlation_condition_check(
    psi_family: Sequence[np.ndarray],
    alpha: float,
    g: Callable[[float], float],
    orderings: Sequence[Sequence[int] | None] | None = None,
    tol: float = 1e-12,
    threads: int | None = None,
) -> CorrelationReport:
    """Check sum_k (1/(alpha m))^{a_k} <= g(alpha) for each matrix (m = its dimension).

    Also reports the largest entry over the family, the quantity that must stay bounded.
    """
    if alpha < 1:
        raise InvalidArgument("alpha must be >= 1")
    if orderings is None:
        orderings = [None] * len(psi_family)
    g_alpha = float(g(alpha))

    def one(args):
        psi, order = args
        seq = schur_sequence(psi, order, g_alpha)
        m = len(seq)
        terms = (1.0 / (alpha * m)) ** seq.a
        total = math.fsum(terms)
        worst = None
        if total > g_alpha + tol:
            worst = int(np.argmax(np.cumsum(terms) > g_alpha + tol)) + 1
        return seq.psi_sup_norm, ConditionRow(m, total, g_alpha, g_alpha - total, worst)

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as ex:
        results = list(ex.map(one, zip(psi_family, orderings)))
    rows = [r for _, r in results]
    failures = [(i, r.worst_k) for i, r in enumerate(rows) if r.worst_k is not None]
    psi_sup = max((s for s, _ in results), default=0.0)
    return CorrelationReport(float(alpha), psi_sup, not failures, rows, failures)


DECAY_REGIME = {
    "dg1xn": lambda n, q: 1 - 1 / (25 * n * q),
    "dgnxn": lambda n, q: 1 - 1 / (400 * n * n * q),
    "srw": lambda n, q: 1 - 2 / (25 * n * q),
}


@dataclass(frozen=True)
class DecayReport:
    t: float
    total: float  # sum over the high-frequency set of exp(2t(Phi - 1))
    count: int  # size of the high-frequency set
    max_phi: float
    regime_bound: float | None
    box_radius: int  # floor(sqrt(q) / (2 pi))

    @property
    def within_regime(self) -> bool | None:
        return None if self.regime_bound is None else self.max_phi <= self.regime_bound + 1e-12


def decay_condition_scan(walk: WalkSpec, t: float, budget: int = L2_BUDGET, threads: int | None = None) -> DecayReport:
    """Exact sum over {y : ||y||_inf > sqrt(q)/(2 pi)} and the largest Phi on that set."""
    t = _check_time(t)
    radius = math.sqrt(walk.q) / (2 * math.pi)
    small = np.abs(residue_grid(walk.q)) <= radius

    def reducer(prefix, phi):
        inside = np.ones(phi.shape, dtype=bool)
        for axis in range(phi.ndim):
            shape = [1] * phi.ndim
            shape[axis] = walk.q
            inside = inside & small.reshape(shape)
        if not all(abs(p) <= radius for p in prefix):
            inside[...] = False
        outside = ~inside
        vals = phi[outside]
        if vals.size == 0:
            return np.array([0.0, 0.0, -np.inf])
        return np.array([np.exp(2 * t * (vals - 1.0)).sum(), float(vals.size), vals.max()])

    parts = lattice_reduce(walk.increments, reducer, budget=budget, threads=threads, raw=True)
    total = math.fsum(parts[:, 0])
    count = int(round(math.fsum(parts[:, 1])))
    max_phi = float(parts[:, 2].max())
    bound = DECAY_REGIME[walk.kind](walk.n, walk.q) if walk.kind in DECAY_REGIME else None
    return DecayReport(t, total, count, max_phi, bound, int(math.floor(radius)))


# ---------------------------------------------------------------- lemma verifiers


@dataclass(frozen=True)
class LemmaCheck:
    total: float
    bound: float
    passed: bool


def lemma_sum_check(n: int, alpha: float) -> LemmaCheck:
    """sum_{k=1}^n (alpha n)^{-k/(k+1)} against (1 + e^{2/e}) / sqrt(alpha)."""
    if n < 1 or alpha < 1:
        raise InvalidArgument("need n >= 1 and alpha >= 1")
    k = np.arange(1, n + 1, dtype=float)
    total = math.fsum(np.exp(-(k / (k + 1)) * math.log(alpha * n)))
    bound = single_sum_constant() / math.sqrt(alpha)
    return LemmaCheck(total, bound, total <= bound)


def lemma_double_sum_check(n: int) -> LemmaCheck:
    """sum_{l,k <= n} (1/n^2)^{(l/(l+1))(k/(k+1))} against 1 + 2e^{4/e} + 2e^{8/e} + e^{32/e}."""
    if n < 1:
        raise InvalidArgument("need n >= 1")
    f = np.arange(1, n + 1, dtype=float)
    f = f / (f + 1)
    total = math.fsum(np.exp(-2 * math.log(n) * np.outer(f, f)).ravel())
    bound = double_sum_constant()
    return LemmaCheck(total, bound, total <= bound)


def gaussian_comb(x, N: int, c: float) -> np.ndarray:
    """F(x) = sum_{j=-N}^{N} exp(-c (j - x)^2)."""
    x = np.asarray(x, dtype=float)
    j = np.arange(-N, N + 1, dtype=float)
    return np.exp(-c * (j[None, :] - x.reshape(-1, 1)) ** 2).sum(axis=1).reshape(x.shape)


def gaussian_comb_argmax(N: int, c: float, grid: float = 1e-4) -> float:
    """Maximiser of the comb over (-1/2, 1/2] by grid search then bounded local refinement."""
    if c <= 0 or N < 0:
        raise InvalidArgument("need c > 0 and N >= 0")
    if grid > 1e-4:
        raise InvalidArgument("grid resolution must be at most 1e-4")
    steps = int(math.ceil(0.5 / grid))
    xs = np.arange(-steps + 1, steps + 1) * (0.5 / steps)
    vals = gaussian_comb(xs, N, c)
    i = int(np.argmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(lambda x: -gaussian_comb(x, N, c), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    best = float(res.x) if -res.fun >= vals[i] else float(xs[i])
    return best


def comb_threshold(N: int, c_grid: Sequence[float], grid: float = 1e-4) -> float | None:
    """Smallest c in the grid from which on the comb's argmax is 0 (within the grid)."""
    cs = sorted(float(c) for c in c_grid)
    zero = [abs(gaussian_comb_argmax(N, c, grid)) <= grid for c in cs]
    for i in range(len(cs)):
        if all(zero[i:]):
            return cs[i]
    return None

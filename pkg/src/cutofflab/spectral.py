"""Exact spectral quantities for translation-invariant walks on Z_q^m.

Eigenvalues of the rate-1 continuous-time walk are exp(t (Phi(2 pi y / q) - 1))
indexed by the lattice y.  Phi over the whole lattice is the discrete Fourier
transform of the increment law, so it is produced with FFTs: either on the
full grid or, above the dense budget, one prefix of leading coordinates at a
time.  Dense arrays are indexed by residue (index i along an axis is the
coordinate value i mod q).
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft
from scipy.special import gammaln

from .errors import InvalidArgument, InvalidTime, InvariantFailure, TooLarge
from .torus import IncrementDistribution, TorusVector, char_fn_generic
from .walks import WalkSpec

L2_BUDGET = 10**8
DENSE_BUDGET = 10**7
ORACLE_BUDGET = 10**5
CHUNK_POINTS = 2**20


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else CUTOFFLAB_THREADS, else cpu count; capped by the env var."""
    env = os.environ.get("CUTOFFLAB_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else None
    n = threads if threads is not None else (cap or os.cpu_count() or 1)
    if cap is not None:
        n = min(n, cap)
    return max(1, int(n))


def _check_time(t: float) -> float:
    t = float(t)
    if not t >= 0 or not math.isfinite(t):
        raise InvalidTime(f"time must be finite and >= 0, got {t!r}")
    return t


def _times(ts) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(ts, dtype=float))
    for t in arr:
        _check_time(t)
    return arr


@dataclass(frozen=True)
class SpectralSummary:
    t: float
    l2_bound_sq: float
    l2_tv_bound: float
    exact_tv: float | None
    lattice_size: int


@dataclass(frozen=True)
class KernelVector:
    """H_t(0, .) over Z_q^m, stored residue-indexed with shape (q,) * m."""

    probs: np.ndarray
    t: float
    q: int
    accuracy: float = 0.0

    @property
    def m(self) -> int:
        return self.probs.ndim

    def at(self, v: TorusVector | Sequence[int]) -> float:
        coords = v.coords if isinstance(v, TorusVector) else tuple(v)
        return float(self.probs[tuple(int(c) % self.q for c in coords)])

    def tv_to_uniform(self) -> float:
        return 0.5 * float(np.abs(self.probs - self.q ** (-self.m)).sum())


# ---------------------------------------------------------------- lattice Phi


def residue_grid(q: int) -> np.ndarray:
    """Canonical coordinate value for each residue index 0..q-1."""
    h = q // 2
    return (np.arange(q) + h) % q - h


def _place(mu: IncrementDistribution, coeffs: np.ndarray, dims: int) -> np.ndarray:
    """Scatter complex weights onto a residue grid over the trailing ``dims`` coordinates."""
    grid = np.zeros((mu.q,) * dims, dtype=complex)
    if dims == 0:
        return np.array(coeffs.sum())
    idx = tuple((mu.vectors[:, mu.m - dims :] % mu.q).T)
    np.add.at(grid, idx, coeffs)
    return grid


def char_lattice(mu: IncrementDistribution, budget: int = DENSE_BUDGET, threads: int | None = None) -> np.ndarray:
    """Phi(2 pi y / q) for every y, residue-indexed, shape (q,) * m."""
    size = mu.q**mu.m
    if size > budget:
        raise TooLarge(f"lattice of {mu.q}^{mu.m} points exceeds dense budget {budget}")
    grid = _place(mu, mu.probs.astype(complex), mu.m)
    spec = scipy.fft.fftn(grid, workers=resolve_threads(threads)) if mu.m else grid
    return np.real(spec)


def _prefix_dims(mu: IncrementDistribution, chunk_points: int) -> int:
    p = 0
    while p < mu.m and mu.q ** (mu.m - p) > chunk_points:
        p += 1
    return p


def iter_prefixes(q: int, p: int) -> Iterable[tuple[int, ...]]:
    """Odometer over canonical values -floor(q/2), ... for the leading p coordinates."""
    vals = [int(v) for v in np.sort(residue_grid(q))]
    return itertools.product(vals, repeat=p)


def lattice_reduce(
    mu: IncrementDistribution,
    reducer: Callable[[tuple[int, ...], np.ndarray], np.ndarray],
    *,
    budget: int = L2_BUDGET,
    chunk_points: int = CHUNK_POINTS,
    threads: int | None = None,
    raw: bool = False,
) -> np.ndarray:
    """Apply ``reducer(prefix, phi_chunk)`` to every lattice chunk and sum the results.

    Chunks are the slices with fixed leading coordinates, visited in odometer
    order. Partial results are combined with ``math.fsum`` in that fixed order,
    so the output does not depend on the worker count. With ``raw=True`` the
    per-chunk results are returned stacked, one row per chunk, unsummed.
    """
    size = mu.q**mu.m
    if size > budget:
        raise TooLarge(
            f"lattice of {mu.q}^{mu.m} points exceeds enumeration budget {budget}; "
            "use the Monte Carlo estimators or a symmetry-reduced path"
        )
    p = _prefix_dims(mu, chunk_points)
    rest = mu.m - p
    pre = mu.vectors[:, :p]

    def one(prefix):
        phase = np.exp(-2j * np.pi * (pre @ np.array(prefix, dtype=np.int64)) / mu.q) if p else 1.0
        grid = _place(mu, mu.probs * phase, rest)
        phi = np.real(scipy.fft.fftn(grid, workers=1)) if rest else np.real(grid)
        return np.atleast_1d(np.asarray(reducer(prefix, phi), dtype=float))

    prefixes = list(iter_prefixes(mu.q, p))
    nthreads = resolve_threads(threads)
    if nthreads > 1 and len(prefixes) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            parts = list(ex.map(one, prefixes))
    else:
        parts = [one(pr) for pr in prefixes]
    stacked = np.vstack(parts)
    if raw:
        return stacked
    return np.array([math.fsum(col) for col in stacked.T])


def _zero_mask(prefix: tuple[int, ...], shape: tuple[int, ...]) -> tuple | None:
    """Index of y = 0 inside a chunk, or None when the prefix is nonzero."""
    if any(prefix):
        return None
    return (0,) * len(shape)


# ---------------------------------------------------------------- eigenvalues


def eigenvalue_at(walk: WalkSpec, y, t: float) -> float:
    """exp(t (Phi(2 pi y / q) - 1)) for a single lattice point y."""
    t = _check_time(t)
    coords = np.asarray(y.coords if isinstance(y, TorusVector) else y, dtype=float)
    if coords.shape != (walk.m,):
        raise InvalidArgument(f"y must have dimension {walk.m}")
    phi = char_fn_generic(walk.increments, 2 * np.pi * coords / walk.q)
    return math.exp(t * (phi - 1.0))


def _srw_l2(walk: WalkSpec, ts: np.ndarray) -> np.ndarray:
    # exp(2t(Phi-1)) factorises over coordinates for the simple random walk
    c = np.cos(2 * np.pi * residue_grid(walk.q) / walk.q)
    out = []
    for t in ts:
        one_d = math.fsum(np.exp(2 * t / walk.n * (c - 1.0)))
        total = one_d**walk.m
        out.append(max(total - 1.0, 0.0))
    return np.array(out)


def l2_bound_curve(
    walk: WalkSpec,
    ts,
    *,
    budget: int = L2_BUDGET,
    threads: int | None = None,
    fast_path: bool = True,
    method: str = "auto",
) -> np.ndarray:
    """Sum over y != 0 of exp(2t(Phi(2 pi y/q) - 1)) for every t in ``ts``.

    ``method`` is "auto", "lattice", "product" (simple random walk) or
    "orbit" (1 x n tables, permutation-reduced).
    """
    ts = _times(ts)
    if method == "auto":
        if fast_path and walk.kind == "srw":
            method = "product"
        elif walk.lattice_size <= budget:
            method = "lattice"
        elif walk.kind == "dg1xn":
            method = "orbit"
        else:
            method = "lattice"
    if method == "product":
        if walk.kind != "srw":
            raise InvalidArgument("product path only applies to the simple random walk")
        return _srw_l2(walk, ts)
    if method == "orbit":
        from .orbits import dg1xn_l2_curve

        if walk.kind != "dg1xn":
            raise InvalidArgument("orbit path only applies to 1 x n table walks")
        return dg1xn_l2_curve(walk.n, walk.q, ts)

    def reducer(prefix, phi):
        zero = _zero_mask(prefix, phi.shape)
        out = []
        for t in ts:
            vals = np.exp(2 * t * (phi - 1.0))
            if zero is not None:
                vals[zero] = 0.0
            out.append(vals.sum())
        return np.array(out)

    return lattice_reduce(walk.increments, reducer, budget=budget, threads=threads)


def l2_bound(walk: WalkSpec, t: float, **kw) -> SpectralSummary:
    sq = float(l2_bound_curve(walk, [t], **kw)[0])
    return SpectralSummary(float(t), sq, math.sqrt(max(sq, 0.0)) / 2, None, walk.lattice_size)


# ---------------------------------------------------------------- kernels


def _finish_kernel(h: np.ndarray, t: float, q: int) -> np.ndarray:
    neg = float(-h[h < 0].sum())
    if neg > 1e-9:
        raise InvariantFailure(f"kernel has {neg:.3g} negative mass at t={t}")
    h = np.clip(h, 0.0, None)
    total = h.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvariantFailure(f"kernel mass {total!r} at t={t}")
    return h / total


def kernel_curve(
    walk: WalkSpec, ts, *, budget: int = DENSE_BUDGET, threads: int | None = None
) -> Iterable[KernelVector]:
    """Exact H_t(0, .) for each t by inverse FFT of the eigenvalue lattice."""
    ts = _times(ts)
    phi = char_lattice(walk.increments, budget=budget, threads=threads)
    workers = resolve_threads(threads)
    for t in ts:
        eig = np.exp(t * (phi - 1.0))
        full = scipy.fft.ifftn(eig, workers=workers)
        # the cosine inversion is the real part; the imaginary part must vanish by symmetry
        imag = float(np.abs(full.imag).max())
        if imag > 1e-10:
            raise InvariantFailure(f"imaginary residue {imag:.3g} in kernel inversion; increment law not symmetric?")
        yield KernelVector(_finish_kernel(full.real.copy(), t, walk.q), float(t), walk.q)


def exact_kernel(walk: WalkSpec, t: float, **kw) -> KernelVector:
    return next(iter(kernel_curve(walk, [t], **kw)))


def exact_tv_curve(
    walk: WalkSpec,
    ts,
    *,
    method: str = "auto",
    budget: int = DENSE_BUDGET,
    threads: int | None = None,
    eps: float = 1e-13,
) -> np.ndarray:
    """d(t) = || H_t(0, .) - uniform ||_TV for every t in ``ts``.

    ``method``: "dense" (FFT kernel), "orbit" (1 x n walks, lumped over
    coordinate permutations), or "auto" (dense when it fits the budget).
    """
    ts = _times(ts)
    if method == "auto":
        method = "dense" if walk.lattice_size <= budget or walk.kind != "dg1xn" else "orbit"
    if method == "dense":
        return np.array([k.tv_to_uniform() for k in kernel_curve(walk, ts, budget=budget, threads=threads)])
    if method == "orbit":
        from .orbits import DG1xNOrbitChain

        if walk.kind != "dg1xn":
            raise InvalidArgument("orbit method only applies to 1 x n table walks")
        return DG1xNOrbitChain(walk.n, walk.q).tv_curve(ts, eps=eps)
    raise InvalidArgument(f"unknown method {method!r}")


def exact_tv(walk: WalkSpec, t: float, **kw) -> float:
    return float(exact_tv_curve(walk, [t], **kw)[0])


def spectral_summary(walk: WalkSpec, t: float, with_exact: bool = True, **kw) -> SpectralSummary:
    s = l2_bound(walk, t)
    tv = exact_tv(walk, t, **kw) if with_exact else None
    return SpectralSummary(s.t, s.l2_bound_sq, s.l2_tv_bound, tv, s.lattice_size)


# ---------------------------------------------------------------- oracle


def poisson_pmf(t: float, k_max: int) -> np.ndarray:
    k = np.arange(k_max + 1)
    if t == 0:
        out = np.zeros(k_max + 1)
        out[0] = 1.0
        return out
    return np.exp(k * math.log(t) - t - gammaln(k + 1))


def poisson_window(t: float, eps: float, lower: bool = False) -> tuple[int, int, np.ndarray]:
    """Index range [lo, hi] of Poisson(t) and its pmf, dropping less than ``eps`` of mass.

    With ``lower=False`` the window starts at 0 and hi is the smallest K whose
    upper tail is below eps. With ``lower=True`` eps is split between both tails.
    """
    t = _check_time(t)
    k_max = int(math.ceil(t + 15 * math.sqrt(t) + 60))
    pmf = poisson_pmf(t, k_max)
    # tails summed from the small end to keep them accurate
    upper = np.concatenate([np.cumsum(pmf[::-1])[::-1][1:], [0.0]])  # mass strictly above k
    up_eps = eps / 2 if lower else eps
    hi = int(np.argmax(upper < up_eps))
    lo = 0
    if lower:
        below = np.concatenate([[0.0], np.cumsum(pmf)[:-1]])  # mass strictly below k
        ok = np.nonzero(below < eps / 2)[0]
        lo = int(ok[-1]) if len(ok) else 0
        lo = min(lo, hi)
    return lo, hi, pmf[lo : hi + 1]


def apply_step(mu: IncrementDistribution, p: np.ndarray) -> np.ndarray:
    """One step of the walk on a residue-indexed distribution: (p P)(x) = sum_g mu(g) p(x - g)."""
    out = np.zeros_like(p)
    axes = tuple(range(mu.m))
    for g, w in zip(mu.vectors, mu.probs):
        out += w * np.roll(p, tuple(int(s) for s in g), axis=axes)
    return out


def uniformization_oracle(walk: WalkSpec, t: float, truncation_eps: float = 1e-13) -> KernelVector:
    """H_t(0, .) as the Poisson(t) mixture of P^k(0, .), truncated with L1 error < truncation_eps."""
    t = _check_time(t)
    if walk.lattice_size > ORACLE_BUDGET:
        raise TooLarge(f"oracle limited to {ORACLE_BUDGET} states, walk has {walk.lattice_size}")
    _, hi, w = poisson_window(t, truncation_eps)
    p = np.zeros((walk.q,) * walk.m)
    p[(0,) * walk.m] = 1.0
    acc = w[0] * p
    for k in range(1, hi + 1):
        p = apply_step(walk.increments, p)
        acc += w[k] * p
    tail = 1.0 - float(w.sum())
    return KernelVector(acc, t, walk.q, accuracy=max(tail, 0.0) + 1e-15 * (hi + 1))


# ---------------------------------------------------------------- Dirichlet form


def state_coords(q: int, m: int) -> np.ndarray:
    """Canonical coordinates of every state, shape (q,) * m + (m,), residue-indexed."""
    r = residue_grid(q)
    mesh = np.meshgrid(*([r] * m), indexing="ij")
    return np.stack(mesh, axis=-1) if m else np.zeros((0,))


def dirichlet_form(walk: WalkSpec, f) -> float:
    """<(I - P) f, f>_pi under the uniform measure.

    ``f`` is either a residue-indexed array of shape (q,) * m or a callable
    taking the coordinate array from :func:`state_coords`.
    """
    if walk.lattice_size > ORACLE_BUDGET:
        raise TooLarge(f"dense Dirichlet form limited to {ORACLE_BUDGET} states")
    vals = f(state_coords(walk.q, walk.m)) if callable(f) else np.asarray(f, dtype=float)
    if vals.shape != (walk.q,) * walk.m:
        raise InvalidArgument(f"f must have shape {(walk.q,) * walk.m}")
    pf = np.zeros_like(vals, dtype=float)
    axes = tuple(range(walk.m))
    for g, w in zip(walk.increments.vectors, walk.increments.probs):
        pf += w * np.roll(vals, tuple(-int(s) for s in g), axis=axes)
    return float(np.mean(vals * (vals - pf)))

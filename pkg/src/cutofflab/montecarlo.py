"""Seeded simulation of the continuous-time walks and the cosine-statistic lower bound.

Random numbers come from Philox4x64-10. Samples are processed in fixed
batches of ``BATCH`` and batch b uses the key (seed, b), so every sample's
stream depends only on (seed, sample index) and never on the worker count.
Inside a batch the raw 64-bit words are consumed in this order: one word per
sample for its Poisson jump count, then, sample by sample, one word per jump
for the increment index. A word x becomes the uniform (x >> 11) * 2^-53.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidArgument
from .spectral import _check_time, exact_kernel, poisson_window, residue_grid, resolve_threads, state_coords
from .torus import TorusVector, canonical_array, char_fn_generic
from .walks import WalkSpec

BATCH = 1024
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    t: float
    samples: int
    seed: int
    walk: WalkSpec
    threads: int | None = None

    def __post_init__(self):
        _check_time(self.t)
        if int(self.samples) != self.samples or self.samples < 1:
            raise InvalidArgument("samples must be a positive integer")


@dataclass(frozen=True)
class PsiStats:
    mean: float
    variance: float
    samples: int
    ci95_halfwidth: float

    @classmethod
    def from_moments(cls, mean: float, variance: float, samples: int) -> "PsiStats":
        if variance < 0:
            raise InvalidArgument("variance must be >= 0")
        return cls(float(mean), float(variance), int(samples), 1.96 * math.sqrt(variance / samples))


def _uniforms(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _generator(seed: int, batch: int) -> np.random.Philox:
    return np.random.Philox(key=np.array([int(seed) & _MASK64, batch], dtype=np.uint64))


def _poisson_table(t: float) -> np.ndarray:
    """CDF of Poisson(t) up to the point where the remaining tail is below 1e-17."""
    _, _, pmf = poisson_window(t, 1e-17)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0  # a draw beyond the table lands on the last index
    return cdf


def _run_batch(walk: WalkSpec, cdf: np.ndarray, inc_cdf: np.ndarray, seed: int, batch: int, size: int) -> np.ndarray:
    gen = _generator(seed, batch)
    # always draw a full batch of jump counts so a short final batch reads the same words
    jumps = np.searchsorted(cdf, _uniforms(gen.random_raw(BATCH)), side="right")[:size]
    total = int(jumps.sum())
    out = np.zeros((size, walk.m), dtype=np.int64)
    if total:
        picks = np.searchsorted(inc_cdf, _uniforms(gen.random_raw(total)), side="right")
        owner = np.repeat(np.arange(size), jumps)
        steps = walk.increments.vectors[picks]
        for c in range(walk.m):
            out[:, c] = np.bincount(owner, weights=steps[:, c], minlength=size).astype(np.int64)
    return canonical_array(out, walk.q)


def simulate(config: SimConfig) -> np.ndarray:
    """Endpoints of ``samples`` independent runs from 0 to time t, shape (samples, m), canonical coordinates."""
    walk = config.walk
    cdf = _poisson_table(config.t)
    inc_cdf = np.cumsum(walk.increments.probs)
    inc_cdf[-1] = 1.0
    n_batches = -(-config.samples // BATCH)
    sizes = [min(BATCH, config.samples - b * BATCH) for b in range(n_batches)]

    def one(b):
        return _run_batch(walk, cdf, inc_cdf, config.seed, b, sizes[b])

    workers = resolve_threads(config.threads)
    if workers > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, range(n_batches)))
    else:
        parts = [one(b) for b in range(n_batches)]
    return np.concatenate(parts, axis=0)


def sample_uniform(q: int, m: int, samples: int, seed: int) -> np.ndarray:
    """Direct draws from the uniform law on Z_q^m, same Philox streams as :func:`simulate`."""
    out = []
    for b in range(-(-samples // BATCH)):
        size = min(BATCH, samples - b * BATCH)
        u = _uniforms(_generator(seed, b).random_raw(BATCH * m)).reshape(BATCH, m)[:size]
        out.append(canonical_array(np.floor(u * q).astype(np.int64), q))
    return np.concatenate(out, axis=0)


def psi_value(x, q: int | None = None):
    """sum_i cos(2 pi x_i / q) for a TorusVector, or row-wise for an (N, m) array."""
    if isinstance(x, TorusVector):
        return float(np.cos(2 * np.pi * x.to_array() / x.q).sum())
    if q is None:
        raise InvalidArgument("q is required for array input")
    arr = np.asarray(x, dtype=float)
    return np.cos(2 * np.pi * arr / q).sum(axis=-1)


def psi_exact_mean(walk: WalkSpec, t: float) -> float:
    """E psi(X_t) from 0: each cos(2 pi x_i / q) is an eigenfunction taking value 1 at 0."""
    t = _check_time(t)
    theta = 2 * np.pi * np.eye(walk.m) / walk.q
    phi = np.atleast_1d(char_fn_generic(walk.increments, theta))
    return math.fsum(np.exp(t * (phi - 1.0)))


def psi_exact_moments(walk: WalkSpec, t: float) -> tuple[float, float]:
    """(mean, variance) of psi under H_t(0, .) by enumerating the exact kernel."""
    probs = exact_kernel(walk, t).probs
    psi = psi_value(state_coords(walk.q, walk.m), walk.q)
    mean = math.fsum((probs * psi).ravel())
    second = math.fsum((probs * psi * psi).ravel())
    return mean, max(second - mean * mean, 0.0)


def psi_stationary_moments(q: int, m: int) -> tuple[float, float]:
    """(mean, variance) of psi under the uniform law, by enumerating all q^m states."""
    one_d = np.cos(2 * np.pi * residue_grid(q) / q)
    grid = np.zeros((q,) * m)
    for axis in range(m):
        shape = [1] * m
        shape[axis] = q
        grid = grid + one_d.reshape(shape)
    n = q**m
    mean = math.fsum(grid.ravel()) / n
    var = math.fsum(((grid - mean) ** 2).ravel()) / n
    return mean, var


def estimate_psi_stats(config: SimConfig, endpoints: np.ndarray | None = None) -> PsiStats:
    if config.samples < 2:
        raise InvalidArgument("need at least 2 samples for a variance")
    if endpoints is None:
        endpoints = simulate(config)
    vals = psi_value(endpoints, config.walk.q)
    return PsiStats.from_moments(float(vals.mean()), float(vals.var(ddof=1)), len(vals))


def stationary_stats(m: int, samples: int = 1) -> PsiStats:
    """Exact stationary moments of psi: mean 0, variance m/2."""
    return PsiStats.from_moments(0.0, m / 2, samples)


def tv_lower_bound(stats_nu, stats_pi) -> float:
    """1 - 4/(4 + b^2) with b = |mean gap| / eta and eta^2 the average of the two variances."""
    if stats_nu.variance < 0 or stats_pi.variance < 0:
        raise InvalidArgument("variances must be >= 0")
    gap = abs(stats_nu.mean - stats_pi.mean)
    eta_sq = (stats_nu.variance + stats_pi.variance) / 2
    if eta_sq == 0:
        return 1.0 if gap > 0 else 0.0
    b_sq = gap * gap / eta_sq
    return 1.0 - 4.0 / (4.0 + b_sq)


def goodness_of_fit(walk: WalkSpec, t: float, endpoints: np.ndarray, min_expected: float = 5.0) -> float:
    """Chi-square p-value of simulated endpoints against the exact kernel.

    Cells with expected count below ``min_expected`` are pooled into one cell.
    """
    probs = exact_kernel(walk, t).probs.ravel()
    idx = np.ravel_multi_index(tuple((np.asarray(endpoints) % walk.q).T), (walk.q,) * walk.m)
    observed = np.bincount(idx, minlength=probs.size).astype(float)
    expected = probs * len(endpoints)
    big = expected >= min_expected
    obs = list(observed[big])
    exp = list(expected[big])
    if (~big).any():
        obs.append(observed[~big].sum())
        exp.append(expected[~big].sum())
    obs, exp = np.array(obs), np.array(exp)
    exp *= obs.sum() / exp.sum()
    if len(obs) < 2:
        return 1.0
    return float(stats.chisquare(obs, exp).pvalue)

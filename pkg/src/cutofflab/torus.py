"""Torus elements, symmetric increment laws and their characteristic functions.

Elements of Z_q^m are represented by integer vectors with every coordinate in
[-q/2, q/2); for even q the value q/2 is stored as -q/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidModulus


def _check_modulus(q: int) -> None:
    if int(q) != q or q < 2:
        raise InvalidModulus(f"modulus must be an integer >= 2, got {q!r}")


def canonical_array(v, q: int) -> np.ndarray:
    """Vectorised canonicalisation into [-q/2, q/2) for integer arrays."""
    h = q // 2
    return (np.asarray(v, dtype=np.int64) + h) % q - h


@dataclass(frozen=True)
class TorusVector:
    coords: tuple[int, ...]
    q: int

    def __post_init__(self):
        _check_modulus(self.q)
        h = self.q // 2
        if any(not (-h <= c < self.q - h) for c in self.coords):
            raise InvalidArgument(f"coordinates {self.coords} not canonical for q={self.q}")

    @property
    def m(self) -> int:
        return len(self.coords)

    def __add__(self, other: "TorusVector") -> "TorusVector":
        if self.q != other.q or self.m != other.m:
            raise InvalidArgument("cannot add vectors from different tori")
        return canonicalize([a + b for a, b in zip(self.coords, other.coords)], self.q)

    def __neg__(self) -> "TorusVector":
        return canonicalize([-a for a in self.coords], self.q)

    def __sub__(self, other: "TorusVector") -> "TorusVector":
        return self + (-other)

    def l1(self) -> int:
        return sum(abs(c) for c in self.coords)

    def linf(self) -> int:
        return max((abs(c) for c in self.coords), default=0)

    def to_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.int64)


def canonicalize(v: Iterable[int], q: int) -> TorusVector:
    """Reduce an integer vector mod q into the representatives [-q/2, q/2)."""
    _check_modulus(q)
    h = q // 2
    return TorusVector(tuple(int((int(c) + h) % q - h) for c in v), int(q))


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, float):
        raise InvalidArgument("probabilities must be exact rationals, not floats")
    return Fraction(p)


@dataclass(frozen=True)
class IncrementDistribution:
    """Finite symmetric law on Z_q^m with exact rational weights."""

    support: tuple[tuple[TorusVector, Fraction], ...]
    m: int
    q: int

    def __post_init__(self):
        _check_modulus(self.q)
        if not self.support:
            raise InvalidArgument("empty support")
        seen: dict[tuple[int, ...], Fraction] = {}
        for v, p in self.support:
            if v.q != self.q or v.m != self.m:
                raise InvalidArgument(f"support vector {v} does not live in Z_{self.q}^{self.m}")
            if not (0 < p <= 1):
                raise InvalidArgument(f"probability {p} outside (0, 1]")
            if v.coords in seen:
                raise InvalidArgument(f"duplicate support vector {v.coords}")
            # L-infinity < q/2 strictly; for even q this excludes -q/2
            if 2 * v.linf() >= self.q:
                raise InvalidArgument(f"support vector {v.coords} has sup-norm >= q/2")
            seen[v.coords] = p
        total = sum(seen.values(), Fraction(0))
        if total != 1:
            raise InvalidArgument(f"probabilities sum to {total}, not 1")
        for coords, p in seen.items():
            neg = tuple(-c for c in coords)
            if seen.get(neg) != p:
                raise InvalidArgument(f"law is not symmetric at {coords}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Sequence[int], object]], q: int) -> "IncrementDistribution":
        """Build from (vector, probability) pairs; repeated vectors are merged."""
        _check_modulus(q)
        acc: dict[tuple[int, ...], Fraction] = {}
        m = None
        for v, p in pairs:
            tv = canonicalize(v, q)
            if m is None:
                m = tv.m
            acc[tv.coords] = acc.get(tv.coords, Fraction(0)) + _as_fraction(p)
        if m is None:
            raise InvalidArgument("empty support")
        support = tuple((TorusVector(c, q), p) for c, p in acc.items())
        return cls(support, m, q)

    @classmethod
    def uniform(cls, vectors: Iterable[Sequence[int]], q: int) -> "IncrementDistribution":
        vecs = [tuple(v) for v in vectors]
        p = Fraction(1, len(vecs))
        return cls.from_pairs(((v, p) for v in vecs), q)

    def __len__(self) -> int:
        return len(self.support)

    @cached_property
    def vectors(self) -> np.ndarray:
        """Support as an (S, m) int64 array, canonical coordinates."""
        return np.array([v.coords for v, _ in self.support], dtype=np.int64).reshape(len(self.support), self.m)

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([float(p) for _, p in self.support])

    @cached_property
    def half_support(self) -> tuple[np.ndarray, np.ndarray]:
        """One representative per {g, -g} pair with the pair's total weight.

        Returns (vectors, weights); g = 0 keeps its own weight.
        """
        index = {v.coords: i for i, (v, _) in enumerate(self.support)}
        keep, weights = [], []
        for i, (v, p) in enumerate(self.support):
            neg = tuple(-c for c in v.coords)
            j = index[neg]
            if j == i:
                keep.append(i)
                weights.append(float(p))
            elif i < j:
                keep.append(i)
                weights.append(float(2 * p))
        return self.vectors[keep], np.array(weights)

    def max_l1(self) -> int:
        return max(v.l1() for v, _ in self.support)

    def max_linf(self) -> int:
        return max(v.linf() for v, _ in self.support)

    def to_json(self) -> str:
        doc = {
            "q": self.q,
            "m": self.m,
            "support": [
                {"v": list(v.coords), "p": f"{p.numerator}/{p.denominator}"} for v, p in self.support
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "IncrementDistribution":
        try:
            doc = json.loads(text)
            q, m = int(doc["q"]), int(doc["m"])
            pairs = [(entry["v"], Fraction(str(entry["p"]))) for entry in doc["support"]]
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise InvalidArgument(f"malformed increment document: {exc}") from exc
        if any(len(v) != m for v, _ in pairs):
            raise InvalidArgument("support vector length does not match m")
        return cls.from_pairs(pairs, q)


def char_fn_generic(mu: IncrementDistribution, theta) -> float | np.ndarray:
    """Characteristic function sum_g mu(g) cos<theta, g>.

    ``theta`` may be a single vector of length m or an (N, m) batch. Each
    {g, -g} pair is folded into one 2p cos term and the pairs are accumulated
    with Kahan compensation, so the result is even in theta to rounding.
    """
    th = np.asarray(theta, dtype=float)
    single = th.ndim == 1
    if th.shape[-1] != mu.m or th.ndim not in (1, 2):
        raise InvalidArgument(f"theta must have trailing dimension {mu.m}, got shape {th.shape}")
    vecs, weights = mu.half_support
    th2 = th.reshape(-1, mu.m)
    total = np.zeros(th2.shape[0])
    comp = np.zeros(th2.shape[0])
    for g, w in zip(vecs, weights):
        term = w * np.cos(th2 @ g) - comp
        nxt = total + term
        comp = (nxt - total) - term
        total = nxt
    return float(total[0]) if single else total


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    marginal_variance: float | None
    sigma_sq: float | None
    equivariant: bool


def moments(mu: IncrementDistribution) -> MomentSummary:
    """Exact mean and covariance of the lattice-valued increment.

    Weights are scaled to a common integer denominator so the sums are done
    in exact integer arithmetic before the final division.
    """
    denom = reduce(math.lcm, (p.denominator for _, p in mu.support), 1)
    w_int = [int(p * denom) for _, p in mu.support]
    bound = denom * mu.max_linf() ** 2 * 4
    dtype = np.int64 if bound < 2**62 else object
    w = np.array(w_int, dtype=dtype)
    V = mu.vectors.astype(dtype)
    first = (V * w[:, None]).sum(axis=0)
    second = (V.T * w) @ V
    mean_frac = [Fraction(int(x), denom) for x in first]
    cov_frac = [
        [Fraction(int(second[i, j]), denom) - mean_frac[i] * mean_frac[j] for j in range(mu.m)]
        for i in range(mu.m)
    ]
    diag = {cov_frac[i][i] for i in range(mu.m)}
    equivariant = len(diag) == 1
    mean = np.array([float(x) for x in mean_frac])
    cov = np.array([[float(x) for x in row] for row in cov_frac]).reshape(mu.m, mu.m)
    if equivariant:
        var = diag.pop()
        return MomentSummary(mean, cov, float(var), float(var * mu.m), True)
    return MomentSummary(mean, cov, None, None, False)

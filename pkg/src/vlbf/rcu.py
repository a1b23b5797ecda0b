"""Random-coding union bound for fixed-length codes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import rng
from .channel import LN2, NEG_INF, DomainError, Dmc, log_binom_coef, log_binom_pmf, log_sum


@dataclass(frozen=True)
class MessageCount:
    """Codebook size ``M``, carried primarily as ``log2 M``.

    ``exact_m`` is kept when the integer is known so that ``log(M - 1)`` can
    be taken exactly; otherwise it is derived from ``log2_m`` without ever
    forming ``M``.
    """

    log2_m: float
    exact_m: Optional[int] = field(default=None)

    def __post_init__(self):
        if self.exact_m is not None:
            if self.exact_m < 1 or int(self.exact_m) != self.exact_m:
                raise DomainError(f"M must be a positive integer, got {self.exact_m!r}")
            if abs(self.log2_m - math.log2(self.exact_m)) > 1e-12:
                raise DomainError(f"log2_m={self.log2_m} inconsistent with M={self.exact_m}")
        if not (self.log2_m >= 0.0) or math.isinf(self.log2_m):
            raise DomainError(f"log2 M must be a finite nonnegative real, got {self.log2_m!r}")

    @classmethod
    def of(cls, m: int) -> "MessageCount":
        return cls(math.log2(m), int(m))

    @classmethod
    def from_log2(cls, log2_m: float) -> "MessageCount":
        return cls(float(log2_m))

    @property
    def log_m_minus_1(self) -> float:
        """Natural log of ``M - 1``; ``-inf`` for ``M = 1``."""
        if self.exact_m is not None:
            return math.log(self.exact_m - 1) if self.exact_m > 1 else NEG_INF
        if self.log2_m == 0.0:
            return NEG_INF
        a = self.log2_m * LN2
        return a + math.log(-math.expm1(-a))

    def to_dict(self) -> dict:
        return {"log2_m": self.log2_m, "exact_m": self.exact_m}


@dataclass(frozen=True)
class RcuValue:
    value: float  # natural-log probability
    n: int
    m: MessageCount

    @property
    def prob(self) -> float:
        return math.exp(self.value)


@lru_cache(maxsize=65536)
def _log_rcu_bsc(n: int, log_m1: float, p: float) -> float:
    if log_m1 == NEG_INF:
        return NEG_INF
    k = np.arange(n + 1)
    log_pmf = log_binom_pmf(n, k, p)
    # log sum_{j<=k} C(n,j) 2^-n, built incrementally over k
    log_inner = np.logaddexp.accumulate(log_binom_coef(n, k) - n * LN2)
    log_terms = log_pmf + np.minimum(0.0, log_m1 + log_inner)
    return min(0.0, log_sum(log_terms))


def rcu_bsc(n: int, m: MessageCount, p: float) -> RcuValue:
    """Exact RCU bound for the BSC(p) with equiprobable inputs, in log domain.

    ``p = 0`` is accepted and collapses the outer sum onto ``k = 0``.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"blocklength must be a positive integer, got {n!r}")
    if not 0.0 <= p <= 0.5:
        raise DomainError(f"crossover must lie in [0, 0.5], got {p!r}")
    return RcuValue(_log_rcu_bsc(int(n), m.log_m_minus_1, float(p)), int(n), m)


def log_rcu_table(n_max: int, m: MessageCount, p: float) -> np.ndarray:
    """``table[n] = log rcu(n, M)`` for ``n = 0 .. n_max`` (``table[0] = 0``, i.e. probability 1 unless M = 1)."""
    log_m1 = m.log_m_minus_1
    out = np.empty(n_max + 1)
    out[0] = NEG_INF if log_m1 == NEG_INF else 0.0
    for n in range(1, n_max + 1):
        out[n] = _log_rcu_bsc(n, log_m1, float(p))
    return out


# --------------------------------------------------------------------------
# Monte Carlo RCU for general DMCs


@dataclass(frozen=True)
class McEstimate:
    mean: float
    half_width: float
    samples: int


def _log_density_values(log_w: np.ndarray, input_dist: np.ndarray, y: int):
    """Atoms ``(log W(y|x), P_X(x))`` with zero-probability transitions dropped."""
    vals = {}
    for x, px in enumerate(input_dist):
        if px == 0 or log_w[x, y] == NEG_INF:
            continue
        key = round(float(log_w[x, y]), 9)
        vals[key] = vals.get(key, 0.0) + px
    return vals


def _tail_prob(per_symbol: list[dict], threshold: float) -> float:
    """``P[sum of independent atoms >= threshold]`` by exact dictionary convolution."""
    dist = {0.0: 1.0}
    for atoms in per_symbol:
        nxt: dict = {}
        for s, ps in dist.items():
            for v, pv in atoms.items():
                key = round(s + v, 9)
                nxt[key] = nxt.get(key, 0.0) + ps * pv
        dist = nxt
    return sum(pr for s, pr in dist.items() if s >= threshold - 1e-9)


def rcu_general_mc(dmc: Dmc, input_dist, n: int, m: MessageCount, samples: int, seed: int) -> McEstimate:
    """Monte Carlo estimate of the RCU bound with i.i.d. inputs over a general DMC.

    The outer expectation over ``(X^n, Y^n)`` is sampled; the inner
    conditional probability is computed exactly by convolving per-symbol
    likelihood atoms. Sample ``i`` uses counter stream ``(seed, i)``.
    """
    px = np.asarray(input_dist, dtype=float)
    if px.shape != (dmc.n_inputs,) or np.any(px < 0) or abs(px.sum() - 1.0) > 1e-12:
        raise DomainError("input_dist must be a probability vector over the channel inputs")
    if np.count_nonzero(px) < 2:
        raise DomainError("input_dist is degenerate (a point mass)")
    if n < 1 or samples < 1:
        raise DomainError("n and samples must be positive")
    log_m1 = m.log_m_minus_1
    if log_m1 == NEG_INF:
        return McEstimate(0.0, 0.0, samples)

    log_w = dmc.log_transition
    cdf_x = np.cumsum(px)
    cdf_y = np.cumsum(dmc.transition, axis=1)
    atoms_by_y = [_log_density_values(log_w, px, y) for y in range(dmc.n_outputs)]

    keys = rng.stream_keys(seed, np.arange(samples))
    u = rng.uniforms(keys, 0, 2 * n)
    xs = np.minimum(np.searchsorted(cdf_x, u[:, :n], side="right"), dmc.n_inputs - 1)
    ys = np.empty_like(xs)
    for i in range(n):
        ys[:, i] = np.minimum(
            (u[:, n + i, None] >= cdf_y[xs[:, i]]).sum(axis=1), dmc.n_outputs - 1
        )

    cache: dict = {}
    vals = np.empty(samples)
    for s in range(samples):
        x, y = xs[s], ys[s]
        threshold = round(float(np.sum(log_w[x, y])), 9)
        ykey = tuple(sorted(y.tolist()))
        ck = (ykey, threshold)
        if ck not in cache:
            q = _tail_prob([atoms_by_y[b] for b in ykey], threshold)
            cache[ck] = math.exp(min(0.0, log_m1 + math.log(q))) if q > 0 else 0.0
        vals[s] = cache[ck]
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1)) if samples > 1 else 0.0
    return McEstimate(mean, 1.96 * sd / math.sqrt(samples), samples)

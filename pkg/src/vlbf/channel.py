"""Channel models and log-domain probability helpers.

Every probability handled by the package is carried as a natural logarithm
(``-inf`` for zero). Sums of probabilities go through log-sum-exp.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

NEG_INF = -math.inf
LN2 = math.log(2.0)


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


# --------------------------------------------------------------------------
# log-domain scalars


def log_add(a: float, b: float) -> float:
    """``log(exp(a) + exp(b))``."""
    return float(np.logaddexp(a, b))


def log_sub(a: float, b: float) -> float:
    """``log(exp(a) - exp(b))`` for ``a >= b``; clips tiny negative round-off to ``-inf``."""
    if b == NEG_INF:
        return a
    if b >= a:
        return NEG_INF
    return a + math.log1p(-math.exp(b - a))


def log_sum(values) -> float:
    """Log-sum-exp accumulated from the smallest term to the largest."""
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0 or arr[-1] == NEG_INF:
        return NEG_INF
    return float(logsumexp(arr))


def log1mexp(a: float) -> float:
    """``log(1 - exp(a))`` for ``a <= 0``."""
    if a == NEG_INF:
        return 0.0
    if a >= 0.0:
        return NEG_INF
    if a > -LN2:
        return math.log(-math.expm1(a))
    return math.log1p(-math.exp(a))


def binary_entropy(p: float) -> float:
    """Binary entropy in bits, with ``0 log 0 = 0``."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise DomainError(f"binary_entropy needs p in [0, 1], got {p!r}")
    return float(-(xlogy(p, p) + xlog1py(1.0 - p, -p)) / LN2)


def bsc_capacity(p: float) -> float:
    return 1.0 - binary_entropy(p)


# --------------------------------------------------------------------------
# binomial machinery


def log_binom_coef(n, k):
    """Natural log of C(n, k) via log-gamma; ``-inf`` outside ``0 <= k <= n``."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    inside = (k >= 0) & (k <= n)
    kk = np.where(inside, k, 0.0)
    out = gammaln(n + 1.0) - gammaln(kk + 1.0) - gammaln(n - kk + 1.0)
    out = np.where(inside, out, NEG_INF)
    return out[()] if out.ndim == 0 else out


def log_binom_pmf(n: int, k, p: float):
    """``log[C(n,k) p^k (1-p)^(n-k)]``; ``-inf`` when ``k`` is outside ``[0, n]``.

    ``k`` may be a scalar or an array.
    """
    k_arr = np.asarray(k, dtype=float)
    inside = (k_arr >= 0) & (k_arr <= n)
    kk = np.where(inside, k_arr, 0.0)
    with np.errstate(invalid="ignore"):
        out = log_binom_coef(n, kk) + xlogy(kk, p) + xlog1py(n - kk, -p)
    out = np.where(inside, out, NEG_INF)
    return float(out) if out.ndim == 0 else out


def log_binom_tail(n: int, k_from: int, k_to: int, p: float) -> float:
    """Log of ``P[k_from <= K <= k_to]`` for ``K ~ Binom(n, p)``."""
    lo = max(int(k_from), 0)
    hi = min(int(k_to), n)
    if lo > hi:
        return NEG_INF
    return log_sum(log_binom_pmf(n, np.arange(lo, hi + 1), p))


def binom_log_tables(n: int, p: float):
    """Return ``(log_pmf, log_below, log_above)`` arrays indexed by ``k`` in ``0..n``.

    ``log_below[k] = log P[K < k]`` and ``log_above[k] = log P[K > k]``; each
    cumulative sum is built from the far tail inward so that the smallest
    terms are accumulated first.
    """
    log_pmf = np.asarray(log_binom_pmf(n, np.arange(n + 1), p), dtype=float).reshape(n + 1)
    le = np.logaddexp.accumulate(log_pmf)  # log P[K <= k]
    ge = np.logaddexp.accumulate(log_pmf[::-1])[::-1]  # log P[K >= k]
    log_below = np.concatenate(([NEG_INF], le[:-1]))
    log_above = np.concatenate((ge[1:], [NEG_INF]))
    return log_pmf, log_below, log_above


@dataclass(frozen=True)
class BinomialDist:
    trials: int
    success_prob: float

    def __post_init__(self):
        if self.trials < 0 or int(self.trials) != self.trials:
            raise DomainError(f"trials must be a nonnegative integer, got {self.trials!r}")
        if not 0.0 <= self.success_prob <= 1.0:
            raise DomainError(f"success_prob must lie in [0, 1], got {self.success_prob!r}")

    def log_pmf(self, k):
        return log_binom_pmf(self.trials, k, self.success_prob)

    def log_tail(self, k_from: int, k_to: int) -> float:
        return log_binom_tail(self.trials, k_from, k_to, self.success_prob)


# --------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel given by a row-stochastic transition matrix."""

    transition: np.ndarray

    def __post_init__(self):
        mat = np.array(self.transition, dtype=float)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise DomainError("transition must be a nonempty 2-D matrix")
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise DomainError("transition probabilities must be finite and nonnegative")
        bad = np.flatnonzero(np.abs(mat.sum(axis=1) - 1.0) > 1e-12)
        if bad.size:
            raise DomainError(f"row {int(bad[0])} of the transition matrix does not sum to 1")
        mat.setflags(write=False)
        object.__setattr__(self, "transition", mat)

    @property
    def n_inputs(self) -> int:
        return self.transition.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.transition.shape[1]

    @property
    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    @classmethod
    def from_dict(cls, data: dict) -> "Dmc":
        rows = data["rows"]
        dmc = cls(np.asarray(rows, dtype=float))
        if "inputs" in data and data["inputs"] != dmc.n_inputs:
            raise DomainError(f"'inputs' is {data['inputs']} but {dmc.n_inputs} rows were given")
        if "outputs" in data and data["outputs"] != dmc.n_outputs:
            raise DomainError(f"'outputs' is {data['outputs']} but rows have {dmc.n_outputs} entries")
        return dmc

    @classmethod
    def from_json(cls, path) -> "Dmc":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "inputs": self.n_inputs,
            "outputs": self.n_outputs,
            "rows": self.transition.tolist(),
        }

    def __eq__(self, other):
        return isinstance(other, Dmc) and np.array_equal(self.transition, other.transition)

    def __hash__(self):
        return hash(self.transition.tobytes())


@dataclass(frozen=True)
class Bsc:
    """Binary symmetric channel with crossover probability ``p`` in (0, 0.5]."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 0.5:
            raise DomainError(f"BSC crossover must lie in (0, 0.5], got {self.p!r}; relabel outputs for p > 0.5")

    # (x_A, x_R): accept is signalled with ones, reject with zeros.
    control_symbols = (1, 0)

    @property
    def capacity(self) -> float:
        return bsc_capacity(self.p)

    def as_dmc(self) -> Dmc:
        q = 1.0 - self.p
        return Dmc(np.array([[q, self.p], [self.p, q]]))


def kl_divergence(row_a, row_b) -> float:
    """D(row_a || row_b) in nats; ``+inf`` when row_b misses mass of row_a."""
    a = np.asarray(row_a, dtype=float)
    b = np.asarray(row_b, dtype=float)
    support = a > 0
    if np.any(b[support] == 0):
        return math.inf
    return float(np.sum(a[support] * (np.log(a[support]) - np.log(b[support]))))


def select_control_symbols(dmc: Dmc) -> tuple[int, int]:
    """Ordered input pair ``(x_A, x_R)`` maximising the divergence between their output rows.

    Ties go to the lexicographically smallest pair.
    """
    if dmc.n_inputs < 2:
        raise DomainError("control-symbol selection needs at least two inputs")
    best = None
    best_d = -math.inf
    for a in range(dmc.n_inputs):
        for r in range(dmc.n_inputs):
            if a == r:
                continue
            d = kl_divergence(dmc.transition[a], dmc.transition[r])
            if d > best_d:
                best, best_d = (a, r), d
    return best


def sequence_log_likelihood(dmc: Dmc, x_seq: Sequence[int], y_seq: Sequence[int]) -> float:
    x = np.asarray(x_seq, dtype=int)
    y = np.asarray(y_seq, dtype=int)
    if x.shape != y.shape:
        raise DomainError(f"sequence lengths differ: {x.size} inputs vs {y.size} outputs")
    if x.size == 0:
        return 0.0
    if x.min() < 0 or x.max() >= dmc.n_inputs:
        raise DomainError("input symbol out of alphabet")
    if y.min() < 0 or y.max() >= dmc.n_outputs:
        raise DomainError("output symbol out of alphabet")
    return float(np.sum(dmc.log_transition[x, y]))

"""Neyman-Pearson confirmation tests for BSC control sequences.

With ``(x_A, x_R) = (1, 0)`` the log-likelihood ratio is increasing in the
Hamming weight ``w`` of the received block, so every optimal test is a
weight threshold: accept when ``w > gamma``, accept with probability
``1 - lambda`` when ``w == gamma``, reject otherwise. Under the accept
hypothesis ``w ~ Binom(t', 1-p)``; under reject ``w ~ Binom(t', p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import NEG_INF, DomainError, binom_log_tables, log_add, log_sub

# lambda within this distance of 0 or 1 is snapped onto a deterministic threshold
_LAMBDA_SNAP = 1e-13


@dataclass(frozen=True)
class TestParams:
    t_prime: int
    gamma: int
    lam: float = 0.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.t_prime < 1:
            raise DomainError(f"confirmation length must be positive, got {self.t_prime}")
        if not 0 <= self.gamma <= self.t_prime:
            raise DomainError(f"gamma must lie in [0, {self.t_prime}], got {self.gamma}")
        if not 0.0 <= self.lam < 1.0:
            raise DomainError(f"lambda must lie in [0, 1), got {self.lam}")


@dataclass(frozen=True)
class TestErrors:
    """Log-domain error pair of one confirmation test.

    ``type_one`` is the probability of rejecting a correct estimate,
    ``type_two`` of accepting a wrong one, ``p_cont`` is
    ``max(type_one, 1 - type_two)``. ``one_minus_type_two`` is computed
    directly from the lower tail rather than by subtraction.
    """

    type_one: float
    type_two: float
    one_minus_type_two: float
    p_cont: float

    __test__ = False

    @property
    def eps(self) -> float:
        return math.exp(self.type_one)

    @property
    def beta(self) -> float:
        return math.exp(self.type_two)


@lru_cache(maxsize=4096)
def _tables(t_prime: int, p: float):
    # weight under reject (T) and under accept (Z = t' - T in distribution)
    t_pmf, t_below, t_above = binom_log_tables(t_prime, p)
    z_pmf, z_below, z_above = binom_log_tables(t_prime, 1.0 - p)
    return t_pmf, t_below, t_above, z_pmf, z_below, z_above


def _check_p(p: float):
    if not 0.0 < p <= 0.5:
        raise DomainError(f"crossover must lie in (0, 0.5], got {p!r}")


def np_errors_from_params(params: TestParams, p: float) -> TestErrors:
    _check_p(p)
    t_pmf, t_below, t_above, z_pmf, z_below, _ = _tables(params.t_prime, float(p))
    g, lam = params.gamma, params.lam
    log_lam = math.log(lam) if lam > 0 else NEG_INF
    type_one = log_add(z_below[g], log_lam + z_pmf[g])
    type_two = log_add(t_above[g], math.log1p(-lam) + t_pmf[g])
    one_minus_two = log_add(t_below[g], log_lam + t_pmf[g])
    return TestErrors(type_one, type_two, one_minus_two, max(type_one, one_minus_two))


def np_beta_for_epsilon(t_prime: int, p: float, log_eps: float) -> tuple[TestParams, TestErrors]:
    """Most powerful test of size ``exp(log_eps)`` and its error pair."""
    _check_p(p)
    if not (log_eps < 0.0) or log_eps == NEG_INF or math.isnan(log_eps):
        raise DomainError("target type-I error must lie strictly inside (0, 1)")
    _, _, _, z_pmf, z_below, _ = _tables(int(t_prime), float(p))
    # smallest gamma with P[Z <= gamma] > eps, so that P[Z < gamma] <= eps
    z_le = np.logaddexp(z_below, z_pmf)
    gamma = int(np.argmax(z_le > log_eps)) if np.any(z_le > log_eps) else t_prime
    rest = log_sub(log_eps, z_below[gamma])
    lam = math.exp(rest - z_pmf[gamma]) if rest > NEG_INF else 0.0
    if lam > 1.0 - _LAMBDA_SNAP:
        if gamma < t_prime:
            gamma, lam = gamma + 1, 0.0
        else:
            lam = 1.0 - _LAMBDA_SNAP
    if lam < _LAMBDA_SNAP:
        lam = 0.0
    lam = min(lam, 1.0 - _LAMBDA_SNAP)
    params = TestParams(int(t_prime), gamma, lam)
    return params, np_errors_from_params(params, p)


def deterministic_test_tables(t_prime: int, p: float):
    """Error arrays over every deterministic threshold ``gamma = 0..t'`` (``lambda = 0``).

    Returns ``(log_eps, log_beta, log_one_minus_beta, log_p_cont)``; each has
    length ``t' + 1``.
    """
    _check_p(p)
    t_pmf, t_below, t_above, z_pmf, z_below, _ = _tables(int(t_prime), float(p))
    log_eps = z_below.copy()
    log_beta = np.logaddexp(t_above, t_pmf)
    log_omb = t_below.copy()
    return log_eps, log_beta, log_omb, np.maximum(log_eps, log_omb)

"""Expected-decoding-time and error-probability bounds for VLBF codes over the BSC.

The code alternates ``k + 1`` communication phases with ``k`` confirmation
phases, ``k = (L - 1) / 2``. After communication phase ``j`` the receiver
ML-decodes everything received in communication phases so far; after
confirmation phase ``j`` it either stops at ``n_{2j}`` or continues. If the
last communication phase is reached, decoding happens at ``n_L``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import NEG_INF, DomainError, log_add, log_sum
from .hyptest import TestErrors, TestParams, np_beta_for_epsilon, np_errors_from_params
from .rcu import MessageCount, rcu_bsc


@dataclass(frozen=True)
class FeedbackSchedule:
    times: tuple

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        object.__setattr__(self, "times", times)
        L = len(times)
        if L < 3 or L % 2 == 0:
            raise DomainError(f"the number of feedback times must be odd and at least 3, got {L}")
        if times[0] < 1:
            raise DomainError(f"n_1 must be a positive integer, got {times[0]}")
        for i in range(1, L):
            if times[i] <= times[i - 1]:
                raise DomainError(
                    f"feedback times must be strictly increasing: n_{i + 1}={times[i]} <= n_{i}={times[i - 1]}"
                )

    @property
    def L(self) -> int:
        return len(self.times)

    @property
    def k(self) -> int:
        """Number of confirmation phases."""
        return (self.L - 1) // 2

    def n(self, i: int) -> int:
        """1-based feedback time with ``n_0 = 0`` and ``n_{L+1} = n_L``."""
        if i == 0:
            return 0
        return self.times[min(i, self.L) - 1]

    @property
    def comm_lengths(self) -> tuple:
        return tuple(self.n(2 * i - 1) - self.n(2 * i - 2) for i in range(1, self.k + 2))

    @property
    def conf_lengths(self) -> tuple:
        return tuple(self.n(2 * i) - self.n(2 * i - 1) for i in range(1, self.k + 1))

    @property
    def decoding_lengths(self) -> tuple:
        """Cumulative number of communication symbols seen by decoder ``j``."""
        return tuple(np.cumsum(self.comm_lengths).tolist())

    @property
    def stopping_times(self) -> tuple:
        """Support of the decoding time: ``n_2, n_4, ..., n_{2k}, n_{2k+1}``."""
        return tuple(self.n(2 * j) for j in range(1, self.k + 1)) + (self.n(self.L),)

    @classmethod
    def from_gaps(cls, gaps: Sequence[int]) -> "FeedbackSchedule":
        return cls(tuple(np.cumsum(gaps).tolist()))


@dataclass(frozen=True)
class PhaseTerms:
    """Per-phase intermediates, all natural-log probabilities.

    The last phase (``j = k + 1``) has no confirmation test; its test
    fields are ``None``.
    """

    log_rcu: float
    log_eps: Optional[float] = None
    log_beta: Optional[float] = None
    log_p_cont: Optional[float] = None
    log_survival: Optional[float] = None  # bound on log P[tau > n_{2j}]


@dataclass(frozen=True)
class BoundResult:
    schedule: FeedbackSchedule
    m: MessageCount
    p: float
    gammas: tuple
    lambdas: tuple
    n_bound: float
    log_eps_bound: float
    phases: tuple
    survival_clamped: bool = False
    eps_clamped: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def eps_bound(self) -> float:
        return math.exp(self.log_eps_bound)

    @property
    def log10_eps_bound(self) -> float:
        return self.log_eps_bound / math.log(10.0)

    @property
    def rate(self) -> float:
        return rate_of(self.m, self.n_bound)

    def to_dict(self) -> dict:
        return {
            "schedule": list(self.schedule.times),
            "log2_m": self.m.log2_m,
            "p": self.p,
            "gammas": list(self.gammas),
            "lambdas": list(self.lambdas),
            "n_bound": self.n_bound,
            "eps_bound": self.eps_bound,
            "log_eps_bound": _json_float(self.log_eps_bound),
            "log10_eps_bound": _json_float(self.log10_eps_bound),
            "rate": self.rate,
            "phases": [{k: _json_float(v) for k, v in asdict(ph).items()} for ph in self.phases],
            "survival_clamped": self.survival_clamped,
            "eps_clamped": self.eps_clamped,
            "metadata": self.metadata,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _json_float(x):
    if x is None:
        return None
    if x == NEG_INF:
        return "-inf"
    return x


def rate_of(m: MessageCount, n_bound: float) -> float:
    if not n_bound > 0:
        raise DomainError(f"expected decoding time must be positive, got {n_bound!r}")
    return m.log2_m / n_bound


def _combine(schedule: FeedbackSchedule, log_rcu, tests: Sequence[TestErrors]):
    """Assemble both bounds from per-phase rcu values and test errors.

    Survival bounds are clamped at 1 and replaced by their running minimum,
    which stays a valid bound because ``{tau > n_{2j}}`` shrinks with ``j``.
    """
    k = schedule.k
    log_prefix = 0.0  # log prod_{i<j} p^(i)
    eps_terms = []
    phases = []
    n_bound = float(schedule.n(2))
    running = 0.0
    clamped = False
    for j in range(1, k + 1):
        t = tests[j - 1]
        eps_terms.append(log_rcu[j - 1] + t.type_two + log_prefix)
        raw = log_add(log_rcu[j - 1] + t.one_minus_type_two, t.type_one) + log_prefix
        surv = min(raw, running)
        clamped |= surv < raw
        running = surv
        n_bound += (schedule.n(2 * j + 2) - schedule.n(2 * j)) * math.exp(surv)
        phases.append(PhaseTerms(log_rcu[j - 1], t.type_one, t.type_two, t.p_cont, surv))
        log_prefix += t.p_cont
    eps_terms.append(log_rcu[k] + log_prefix)
    phases.append(PhaseTerms(log_rcu[k]))
    raw_eps = log_sum(eps_terms)
    log_eps = min(raw_eps, 0.0)
    return n_bound, log_eps, tuple(phases), clamped, raw_eps > 0.0


def evaluate_theorem1(
    schedule: FeedbackSchedule,
    m: MessageCount,
    p: float,
    gammas: Sequence[int],
    lambdas: Optional[Sequence[float]] = None,
) -> BoundResult:
    """Evaluate both achievability bounds for a schedule and confirmation thresholds."""
    k = schedule.k
    gammas = tuple(int(g) for g in gammas)
    lambdas = tuple(float(x) for x in lambdas) if lambdas is not None else (0.0,) * k
    if len(gammas) != k or len(lambdas) != k:
        raise DomainError(f"need {k} thresholds, got {len(gammas)} gammas and {len(lambdas)} lambdas")
    conf = schedule.conf_lengths
    tests = []
    for i in range(k):
        if not 0 <= gammas[i] <= conf[i]:
            raise DomainError(f"gamma_{i + 1}={gammas[i]} outside [0, {conf[i]}]")
        if not 0.0 <= lambdas[i] < 1.0:
            raise DomainError(f"lambda_{i + 1}={lambdas[i]} outside [0, 1)")
        tests.append(np_errors_from_params(TestParams(conf[i], gammas[i], lambdas[i]), p))
    log_rcu = [rcu_bsc(n, m, p).value for n in schedule.decoding_lengths]
    n_bound, log_eps, phases, s_clamped, e_clamped = _combine(schedule, log_rcu, tests)
    return BoundResult(
        schedule, m, float(p), gammas, lambdas, n_bound, log_eps, phases,
        survival_clamped=s_clamped, eps_clamped=e_clamped,
        metadata={"clamping": "survival bounds clamped at 1 (running minimum), eps bound clamped at 1"},
    )


def evaluate_with_epsilons(
    schedule: FeedbackSchedule, m: MessageCount, p: float, log_eps_targets: Sequence[float]
) -> BoundResult:
    """Same as :func:`evaluate_theorem1` but with per-phase type-I error targets."""
    conf = schedule.conf_lengths
    if len(log_eps_targets) != schedule.k:
        raise DomainError(f"need {schedule.k} type-I targets, got {len(log_eps_targets)}")
    params = [np_beta_for_epsilon(t, p, e)[0] for t, e in zip(conf, log_eps_targets)]
    return evaluate_theorem1(schedule, m, p, [q.gamma for q in params], [q.lam for q in params])

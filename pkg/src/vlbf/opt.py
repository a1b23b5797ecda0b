"""Feedback-schedule and threshold optimisation.

The objective is the expected-decoding-time bound, minimised subject to the
error bound meeting a target. Thresholds ``gamma`` are searched exhaustively
for every candidate schedule (``lambda = 0`` throughout); schedules are
searched either exhaustively over a box (L = 3) or by a seeded multistart
integer pattern search with an optional radial-basis surrogate.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RBFInterpolator
from scipy.special import logsumexp

from .bound import BoundResult, FeedbackSchedule, evaluate_theorem1, rate_of
from .channel import NEG_INF, DomainError, bsc_capacity
from .hyptest import deterministic_test_tables
from .rcu import MessageCount, log_rcu_table

DEFAULT_BOX_FACTOR = 4.0
DEFAULT_BUDGET = 10_000
# The grid search over thresholds refuses grids larger than this.
MAX_GAMMA_GRID = 2_000_000


class BoxTooLarge(DomainError):
    pass


@dataclass(frozen=True)
class OptProblem:
    m: MessageCount
    p: float
    log_eps_target: float
    L: int
    search_box: tuple  # ((lo_1, hi_1), ..., (lo_L, hi_L)), inclusive
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not (self.log_eps_target < 0.0) or self.log_eps_target == NEG_INF:
            raise DomainError("target error probability must lie strictly inside (0, 1)")
        if self.L < 3 or self.L % 2 == 0:
            raise DomainError(f"L must be odd and at least 3, got {self.L}")
        box = tuple((int(lo), int(hi)) for lo, hi in self.search_box)
        if len(box) != self.L:
            raise DomainError(f"search box has {len(box)} ranges for L={self.L}")
        for i, (lo, hi) in enumerate(box):
            if lo < 1 or hi < lo:
                raise DomainError(f"range {i + 1} of the search box is empty or nonpositive: [{lo}, {hi}]")
        if box_volume(box) == 0:
            raise DomainError("search box contains no strictly increasing schedule")
        object.__setattr__(self, "search_box", box)

    @classmethod
    def with_default_box(cls, m: MessageCount, p: float, log_eps_target: float, L: int,
                         budget: int = DEFAULT_BUDGET, box_factor: float = DEFAULT_BOX_FACTOR):
        """Box ``i <= n_i <= max(ceil(box_factor * (log2 M + log2(1/eps)) / C), 2L)``."""
        log2_inv_eps = -log_eps_target / math.log(2.0)
        hi = max(math.ceil(box_factor * (m.log2_m + log2_inv_eps) / bsc_capacity(p)), 2 * L)
        return cls(m, p, log_eps_target, L, tuple((i + 1, hi) for i in range(L)), budget)

    @property
    def n_max(self) -> int:
        return self.search_box[-1][1]


@dataclass
class OptResult:
    best_schedule: Optional[FeedbackSchedule]
    best_gammas: Optional[tuple]
    best_bound: Optional[BoundResult]
    evaluations: int
    method: str
    history: list = field(default_factory=list, repr=False)

    @property
    def feasible(self) -> bool:
        return self.best_bound is not None

    @property
    def n_bound(self) -> float:
        return self.best_bound.n_bound if self.best_bound is not None else math.inf

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "method": self.method,
            "evaluations": self.evaluations,
            "schedule": list(self.best_schedule.times) if self.best_schedule else None,
            "gammas": list(self.best_gammas) if self.best_gammas is not None else None,
            "bound": self.best_bound.to_dict() if self.best_bound is not None else None,
        }


def box_volume(box) -> int:
    """Number of strictly increasing integer points in a per-coordinate box."""
    lo0, hi0 = box[0]
    counts = {v: 1 for v in range(lo0, hi0 + 1)}
    for lo, hi in box[1:]:
        nxt = {}
        acc = 0
        prev = sorted(counts)
        idx = 0
        for v in range(lo, hi + 1):
            while idx < len(prev) and prev[idx] < v:
                acc += counts[prev[idx]]
                idx += 1
            if acc:
                nxt[v] = acc
        counts = nxt
        if not counts:
            return 0
    return sum(counts.values())


# --------------------------------------------------------------------------
# threshold search for one schedule


@dataclass(frozen=True)
class _GridBest:
    feasible: bool
    n_bound: float
    gammas: Optional[tuple]
    log_eps: float  # of the returned point, or the smallest over the grid when infeasible


class _Tables:
    """Per-problem caches: rcu by decoding length, test errors by confirmation length."""

    def __init__(self, m: MessageCount, p: float, n_max: int):
        self.m = m
        self.p = p
        self.log_rcu = log_rcu_table(n_max, m, p)
        self._tests: dict = {}

    def grow(self, n_max: int):
        if n_max >= len(self.log_rcu):
            self.log_rcu = log_rcu_table(n_max, self.m, self.p)

    def tests(self, t_prime: int):
        if t_prime not in self._tests:
            self._tests[t_prime] = deterministic_test_tables(t_prime, self.p)
        return self._tests[t_prime]


def _grid(schedule: FeedbackSchedule, tables: _Tables):
    """Both bounds over the full ``gamma`` grid, mirroring ``bound._combine``."""
    k = schedule.k
    conf = schedule.conf_lengths
    dec = schedule.decoding_lengths
    tables.grow(dec[-1])
    log_rcu = tables.log_rcu

    def axis(j, arr):
        shape = [1] * k
        shape[j] = -1
        return arr.reshape(shape)

    log_prefix = np.zeros([1] * k)
    running = np.zeros([1] * k)
    n_bound = np.full([1] * k, float(schedule.n(2)))
    eps_terms = []
    for j in range(k):
        le, lb, lomb, lp = (axis(j, a) for a in tables.tests(conf[j]))
        r = log_rcu[dec[j]]
        eps_terms.append(r + lb + log_prefix)
        raw = np.logaddexp(r + lomb, le) + log_prefix
        running = np.minimum(raw, running)
        n_bound = n_bound + (schedule.n(2 * j + 4) - schedule.n(2 * j + 2)) * np.exp(running)
        log_prefix = log_prefix + lp
    eps_terms.append(log_rcu[dec[k]] + log_prefix)
    stack = np.sort(np.stack(np.broadcast_arrays(*eps_terms)), axis=0)
    with np.errstate(divide="ignore"):
        log_eps = np.minimum(logsumexp(stack, axis=0), 0.0)
    n_bound = np.broadcast_to(n_bound, log_eps.shape)
    return n_bound, log_eps


def _best_on_grid(schedule: FeedbackSchedule, tables: _Tables, log_eps_target: float) -> _GridBest:
    size = math.prod(t + 1 for t in schedule.conf_lengths)
    if size > MAX_GAMMA_GRID:
        raise BoxTooLarge(f"threshold grid of {size} points exceeds {MAX_GAMMA_GRID}")
    n_bound, log_eps = _grid(schedule, tables)
    feasible = log_eps <= log_eps_target
    if not feasible.any():
        return _GridBest(False, math.inf, None, float(log_eps.min()))
    masked = np.where(feasible, n_bound, np.inf).ravel()
    # argmin returns the first minimiser: the lexicographically smallest gammas
    flat = int(np.argmin(masked))
    idx = tuple(int(i) for i in np.unravel_index(flat, n_bound.shape))
    return _GridBest(True, float(masked[flat]), idx, float(log_eps.ravel()[flat]))


def inner_gamma_opt(schedule: FeedbackSchedule, m: MessageCount, p: float, log_eps_target: float,
                    tables: Optional[_Tables] = None):
    """Best thresholds for a fixed schedule.

    Returns ``(gammas, BoundResult)``, or ``None`` when no threshold vector
    meets the error target.
    """
    tables = tables or _Tables(m, p, schedule.decoding_lengths[-1])
    best = _best_on_grid(schedule, tables, log_eps_target)
    if not best.feasible:
        return None
    result = evaluate_theorem1(schedule, m, p, best.gammas)
    if result.log_eps_bound > log_eps_target:
        # grid and direct evaluation disagree in the last ulp; scan exactly
        return _exact_scan(schedule, m, p, log_eps_target)
    return best.gammas, result


def _exact_scan(schedule, m, p, log_eps_target):
    best = None
    for gammas in itertools.product(*(range(t + 1) for t in schedule.conf_lengths)):
        r = evaluate_theorem1(schedule, m, p, gammas)
        if r.log_eps_bound <= log_eps_target and (best is None or r.n_bound < best[1].n_bound):
            best = (gammas, r)
    return best


# --------------------------------------------------------------------------
# schedule search


class _Objective:
    """Memoised schedule evaluations with an evaluation counter.

    Scores order feasible points by ``n_bound`` and infeasible ones after
    them by how far their best error bound misses the target.
    """

    def __init__(self, problem: OptProblem):
        self.problem = problem
        self.tables = _Tables(problem.m, problem.p, problem.n_max)
        self.cache: dict = {}
        self.evaluations = 0

    def in_box(self, times) -> bool:
        if any(b <= a for a, b in zip(times, times[1:])):
            return False
        return all(lo <= t <= hi for t, (lo, hi) in zip(times, self.problem.search_box))

    def __call__(self, times: tuple):
        if times not in self.cache:
            self.evaluations += 1
            g = _best_on_grid(FeedbackSchedule(times), self.tables, self.problem.log_eps_target)
            score = (0, g.n_bound, times) if g.feasible else (1, g.log_eps - self.problem.log_eps_target, times)
            self.cache[times] = (score, g)
        return self.cache[times]

    def exhausted(self) -> bool:
        return self.evaluations >= self.problem.budget

    def feasible_points(self):
        return [(t, g) for t, (s, g) in self.cache.items() if g.feasible]


def _finish(obj: _Objective, method: str, history=None) -> OptResult:
    p = obj.problem
    candidates = sorted((s, t) for t, (s, g) in obj.cache.items() if g.feasible)
    for _, times in candidates[:16]:
        schedule = FeedbackSchedule(times)
        found = inner_gamma_opt(schedule, p.m, p.p, p.log_eps_target, obj.tables)
        if found is not None:
            gammas, bound = found
            return OptResult(schedule, tuple(gammas), bound, obj.evaluations, method, history or [])
    return OptResult(None, None, None, obj.evaluations, method, history or [])


def _increasing_points(box):
    def rec(i, prev):
        lo, hi = box[i]
        for v in range(max(lo, prev + 1), hi + 1):
            if i == len(box) - 1:
                yield (v,)
            else:
                for rest in rec(i + 1, v):
                    yield (v,) + rest
    yield from rec(0, 0)


def optimize_exhaustive(problem: OptProblem) -> OptResult:
    """Scan every strictly increasing schedule in the box (lexicographic order)."""
    volume = box_volume(problem.search_box)
    if volume > problem.budget:
        raise BoxTooLarge(f"search box holds {volume} schedules, budget is {problem.budget}")
    obj = _Objective(problem)
    top: list = []

    def offer(times, g):
        # keep a few runners-up in case direct re-evaluation rejects the winner
        item = (-g.n_bound, _neg_lex(times), times, g)
        if len(top) < 16:
            heapq.heappush(top, item)
        elif item > top[0]:
            heapq.heapreplace(top, item)

    if problem.L == 3:
        _scan_rows_l3(problem, obj, offer)
    else:
        for times in _increasing_points(problem.search_box):
            g = _best_on_grid(FeedbackSchedule(times), obj.tables, problem.log_eps_target)
            obj.evaluations += 1
            if g.feasible:
                offer(times, g)
    for _, _, times, g in sorted(top, reverse=True):
        obj.cache[times] = ((0, g.n_bound, times), g)
    return _finish(obj, "exhaustive")


def _scan_rows_l3(problem: OptProblem, obj: _Objective, offer):
    """L = 3 scan vectorised over ``(n_3, gamma)`` for each ``(n_1, n_2)`` row.

    Computes the same quantities as ``_grid``; with one confirmation phase
    the survival bound is ``min(1, rcu_1 (1 - beta) + eps)`` and the error
    bound is ``rcu_1 beta + rcu_2 p_cont``.
    """
    (lo1, hi1), (lo2, hi2), (lo3, hi3) = problem.search_box
    obj.tables.grow(hi3)
    log_rcu = obj.tables.log_rcu
    target = problem.log_eps_target
    for n1 in range(lo1, hi1 + 1):
        for n2 in range(max(lo2, n1 + 1), hi2 + 1):
            n3 = np.arange(max(lo3, n2 + 1), hi3 + 1)
            if n3.size == 0:
                continue
            obj.evaluations += n3.size
            le, lb, lomb, lp = obj.tables.tests(n2 - n1)
            r1 = log_rcu[n1]
            r2 = log_rcu[n1 + n3 - n2][:, None]
            with np.errstate(divide="ignore"):
                terms = np.sort(np.stack(np.broadcast_arrays(r1 + lb[None, :], r2 + lp[None, :])), axis=0)
                log_eps = np.minimum(logsumexp(terms, axis=0), 0.0)
            surv = np.minimum(np.logaddexp(r1 + lomb, le), 0.0)[None, :]
            n_bound = n2 + (n3 - n2)[:, None] * np.exp(surv)
            masked = np.where(log_eps <= target, n_bound, np.inf)
            flat = int(np.argmin(masked))
            best = float(masked.ravel()[flat])
            if best == math.inf:
                continue
            i, g = np.unravel_index(flat, masked.shape)
            offer((n1, n2, int(n3[i])), _GridBest(True, best, (int(g),), float(log_eps[i, g])))


def _neg_lex(times):
    return tuple(-t for t in times)


def _random_start(obj: _Objective, gen: np.random.Generator):
    box = obj.problem.search_box
    los = [lo for lo, _ in box]
    his = [hi for _, hi in box]
    if len(set(los)) == 1 and len(set(his)) == 1 and his[0] - los[0] + 1 >= len(box):
        vals = gen.choice(np.arange(los[0], his[0] + 1), size=len(box), replace=False)
        return tuple(sorted(int(v) for v in vals))
    for _ in range(10_000):
        times = tuple(int(gen.integers(lo, hi + 1)) for lo, hi in box)
        if obj.in_box(times):
            return times
    raise DomainError("could not sample a strictly increasing schedule from the search box")


def _neighbours(times: tuple, step: int):
    L = len(times)
    for i in range(L):
        for d in (-step, step):
            moved = list(times)
            moved[i] += d
            yield tuple(moved)
    # gap moves: stretch or shrink gap i, shifting every later time with it
    for i in range(1, L):
        for d in (-step, step):
            yield times[:i] + tuple(t + d for t in times[i:])


def _pattern_search(obj: _Objective, start: tuple, step: int, history: list):
    cur = start
    cur_score, _ = obj(cur)
    history.append((cur_score[0], cur_score[1]))
    while step >= 1 and not obj.exhausted():
        improved = False
        for cand in _neighbours(cur, step):
            if obj.exhausted():
                break
            if not obj.in_box(cand):
                continue
            s, _ = obj(cand)
            if s < cur_score:
                cur, cur_score = cand, s
                history.append((s[0], s[1]))
                improved = True
                break
        if not improved:
            step //= 2
    return cur, cur_score


def _clip_start(obj: _Objective, times: Sequence[int]):
    box = obj.problem.search_box
    out = []
    prev = 0
    for t, (lo, hi) in zip(times, box):
        v = min(max(int(round(t)), lo, prev + 1), hi)
        out.append(v)
        prev = v
    out = tuple(out)
    return out if obj.in_box(out) else None


def optimize_stochastic(problem: OptProblem, restarts: int = 8, seed: int = 0,
                        starts: Sequence[Sequence[int]] = (), surrogate: bool = True,
                        surrogate_rounds: int = 200) -> OptResult:
    """Multistart integer pattern search, then surrogate-guided proposals.

    Deterministic given ``seed``. ``starts`` are extra initial schedules
    (e.g. warm starts) tried before the random ones.
    """
    if problem.L not in (3, 5):
        raise DomainError(f"stochastic search supports L in {{3, 5}}, got {problem.L}")
    if problem.budget < 1 or restarts < 1:
        raise DomainError("budget and restarts must be positive")
    gen = np.random.default_rng(seed)
    obj = _Objective(problem)
    history: list = []
    span = problem.search_box[-1][1] - problem.search_box[0][0]
    step0 = max(1, span // 8)

    initial = [s for s in (_clip_start(obj, st) for st in starts) if s is not None]
    initial += [_random_start(obj, gen) for _ in range(restarts)]
    for start in initial:
        if obj.exhausted():
            break
        _pattern_search(obj, start, step0, history)

    if surrogate and not obj.exhausted():
        _surrogate_phase(obj, gen, surrogate_rounds, history)
    return _finish(obj, "stochastic", history)


def _surrogate_phase(obj: _Objective, gen, rounds: int, history: list):
    L = obj.problem.L
    stale = 0
    for _ in range(rounds):
        if obj.exhausted() or stale >= 25:
            break
        pts = sorted(obj.feasible_points(), key=lambda tg: tg[1].n_bound)[:150]
        if len(pts) < L + 2:
            start = _random_start(obj, gen)
            _pattern_search(obj, start, 2, history)
            stale += 1
            continue
        x = np.array([t for t, _ in pts], dtype=float)
        y = np.array([g.n_bound for _, g in pts])
        try:
            model = RBFInterpolator(x, y, kernel="thin_plate_spline", degree=1, smoothing=1e-9)
        except (np.linalg.LinAlgError, ValueError):
            stale += 1
            continue
        best_t = pts[0][0]
        cands = {_random_start(obj, gen) for _ in range(200)}
        for _ in range(200):
            jitter = gen.integers(-3, 4, size=L)
            c = _clip_start(obj, np.array(best_t) + jitter)
            if c is not None:
                cands.add(c)
        cands = sorted(c for c in cands if c not in obj.cache)
        if not cands:
            stale += 1
            continue
        pred = model(np.array(cands, dtype=float))
        pick = cands[int(np.argmin(pred))]
        before = pts[0][1].n_bound
        s, _ = obj(pick)
        if s[0] == 0 and s[1] < before:
            _pattern_search(obj, pick, 2, history)
            stale = 0
        else:
            stale += 1


# --------------------------------------------------------------------------
# rate curves


@dataclass(frozen=True)
class CurvePoint:
    log2_m: float
    n_bound: float
    rate: float
    schedule: Optional[tuple]
    gammas: Optional[tuple]
    log_eps_bound: float
    method: str

    @property
    def feasible(self) -> bool:
        return self.schedule is not None


@dataclass(frozen=True)
class SweepTemplate:
    box_factor: float = DEFAULT_BOX_FACTOR
    budget: int = DEFAULT_BUDGET
    restarts: int = 8
    seed: int = 0
    exhaustive_limit: int = 5_000_000  # L = 3 boxes up to this size are scanned exhaustively


def optimize(problem: OptProblem, restarts: int = 8, seed: int = 0, starts=(),
             exhaustive_limit: int = 5_000_000) -> OptResult:
    """Exhaustive search for small L = 3 boxes, stochastic search otherwise."""
    volume = box_volume(problem.search_box)
    if problem.L == 3 and volume <= exhaustive_limit:
        big = OptProblem(problem.m, problem.p, problem.log_eps_target, problem.L,
                         problem.search_box, max(problem.budget, volume))
        return optimize_exhaustive(big)
    return optimize_stochastic(problem, restarts=restarts, seed=seed, starts=starts)


def sweep_rate_curve(p: float, log_eps_target: float, L: int, log2m_list: Sequence[float],
                     template: SweepTemplate = SweepTemplate()) -> list:
    """Optimised (N, rate) points for each ``log2 M``, sorted by ``n_bound``.

    Infeasible points are kept with ``schedule=None`` at the end of the list.
    """
    if len(log2m_list) == 0:
        raise DomainError("log2m_list must be nonempty")
    points = []
    prev = None  # (log2_m, schedule times)
    for i, log2m in enumerate(log2m_list):
        m = MessageCount.from_log2(log2m)
        problem = OptProblem.with_default_box(m, p, log_eps_target, L, template.budget, template.box_factor)
        starts = []
        if prev is not None and prev[0] > 0:
            scale = log2m / prev[0]
            starts.append([t * scale for t in prev[1]])
        res = optimize(problem, template.restarts, template.seed + i, starts, template.exhaustive_limit)
        if res.feasible:
            points.append(CurvePoint(float(log2m), res.n_bound, rate_of(m, res.n_bound),
                                     res.best_schedule.times, res.best_gammas,
                                     res.best_bound.log_eps_bound, res.method))
            prev = (log2m, res.best_schedule.times)
        else:
            points.append(CurvePoint(float(log2m), math.nan, math.nan, None, None, math.nan, res.method))
    feasible = sorted((q for q in points if q.feasible), key=lambda q: (q.n_bound, q.log2_m))
    return feasible + [q for q in points if not q.feasible]

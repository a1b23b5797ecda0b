import itertools
import math

import numpy as np
import pytest

from vlbf.bound import FeedbackSchedule, evaluate_theorem1
from vlbf.channel import DomainError, bsc_capacity
from vlbf.opt import (
    BoxTooLarge,
    OptProblem,
    SweepTemplate,
    box_volume,
    inner_gamma_opt,
    optimize,
    optimize_exhaustive,
    optimize_stochastic,
    sweep_rate_curve,
)
from vlbf.rcu import MessageCount

import oracles

LOG_1E3 = math.log(1e-3)


def _brute(problem):
    best = None
    ranges = [range(lo, hi + 1) for lo, hi in problem.search_box]
    for times in itertools.product(*ranges):
        if any(b <= a for a, b in zip(times, times[1:])):
            continue
        s = FeedbackSchedule(times)
        for g in itertools.product(*(range(t + 1) for t in s.conf_lengths)):
            r = evaluate_theorem1(s, problem.m, problem.p, g)
            if r.log_eps_bound <= problem.log_eps_target and (best is None or r.n_bound < best.n_bound):
                best = r
    return best


def test_inner_gamma_example():
    s = FeedbackSchedule((2, 4, 6))
    gammas, r = inner_gamma_opt(s, MessageCount.of(2), 0.11, math.log(0.25))
    assert gammas == (1,)
    assert r.eps_bound == pytest.approx(0.2170081195, abs=1e-9)


def test_inner_gamma_vacuous_target_accepts_always():
    s = FeedbackSchedule((2, 4, 6))
    gammas, r = inner_gamma_opt(s, MessageCount.of(2), 0.11, math.log(0.999))
    assert gammas == (0,)
    assert r.n_bound == pytest.approx(4.0)


def test_inner_gamma_single_message():
    gammas, r = inner_gamma_opt(FeedbackSchedule((2, 4, 6)), MessageCount.of(1), 0.11, math.log(1e-6))
    assert r.eps_bound == 0.0 and r.n_bound == 4.0 and gammas == (0,)


def test_inner_gamma_infeasible():
    assert inner_gamma_opt(FeedbackSchedule((2, 4, 6)), MessageCount.of(2), 0.11, math.log(1e-3)) is None


def test_inner_gamma_matches_enumeration_l5():
    s = FeedbackSchedule((8, 12, 20, 24, 40))
    m = MessageCount.of(16)
    gammas, r = inner_gamma_opt(s, m, 0.11, math.log(0.05))
    cands = [evaluate_theorem1(s, m, 0.11, g) for g in itertools.product(range(5), range(5))]
    best = min((c for c in cands if c.eps_bound <= 0.05), key=lambda c: c.n_bound)
    assert r.n_bound == pytest.approx(best.n_bound, abs=1e-12)
    assert gammas == (2, 2)


def test_box_volume():
    assert box_volume(((1, 3), (1, 3), (1, 3))) == 1
    assert box_volume(((1, 10), (1, 10), (1, 10))) == math.comb(10, 3)
    assert box_volume(((5, 5), (3, 4), (6, 9))) == 0


def test_problem_validation():
    m = MessageCount.of(4)
    with pytest.raises(DomainError):
        OptProblem(m, 0.11, 0.0, 3, ((1, 5),) * 3)
    with pytest.raises(DomainError):
        OptProblem(m, 0.11, LOG_1E3, 4, ((1, 5),) * 4)
    with pytest.raises(DomainError):
        OptProblem(m, 0.11, LOG_1E3, 3, ((1, 5),) * 2)
    with pytest.raises(DomainError):
        OptProblem(m, 0.11, LOG_1E3, 3, ((5, 5), (4, 4), (6, 6)))


def test_default_box_reaches_target():
    m = MessageCount.of(16)
    pr = OptProblem.with_default_box(m, 0.11, LOG_1E3, 3)
    hi = math.ceil(4 * (4 + math.log2(1e3)) / bsc_capacity(0.11))
    assert pr.search_box == ((1, hi), (2, hi), (3, hi))
    assert optimize(pr).feasible


@pytest.mark.parametrize("L,box,log2m,target", [
    (3, ((1, 8), (2, 10), (4, 16)), 2, math.log(0.05)),
    (3, ((3, 14), (5, 18), (10, 40)), 4, math.log(1e-2)),
    (5, ((4, 7), (5, 8), (8, 11), (9, 12), (12, 20)), 2, math.log(0.05)),
])
def test_exhaustive_matches_brute_force(L, box, log2m, target):
    pr = OptProblem(MessageCount.from_log2(log2m), 0.11, target, L, box, budget=50_000)
    res = optimize_exhaustive(pr)
    ref = _brute(pr)
    assert res.feasible and ref is not None
    assert res.n_bound == pytest.approx(ref.n_bound, abs=1e-12)
    again = evaluate_theorem1(res.best_schedule, pr.m, pr.p, res.best_gammas)
    assert again.log_eps_bound <= target
    assert again.n_bound == pytest.approx(res.n_bound, abs=1e-12)


def test_exhaustive_against_exact_oracle():
    pr = OptProblem(MessageCount.of(2), 0.11, math.log(0.25), 3, ((1, 3), (2, 5), (3, 8)))
    res = optimize_exhaustive(pr)
    n_ref, e_ref = oracles.theorem1(res.best_schedule.times, 2, "0.11", list(res.best_gammas))
    assert res.n_bound == pytest.approx(float(n_ref), rel=1e-12)
    assert float(e_ref) <= 0.25


def test_single_point_box():
    pr = OptProblem(MessageCount.of(2), 0.11, math.log(0.25), 3, ((2, 2), (4, 4), (6, 6)))
    res = optimize_exhaustive(pr)
    assert res.best_schedule.times == (2, 4, 6) and res.best_gammas == (1,)
    assert res.evaluations == 1


def test_infeasible_target_reports_no_schedule():
    pr = OptProblem(MessageCount.of(16), 0.11, math.log(1e-30), 3, ((1, 10), (2, 12), (3, 20)))
    res = optimize_exhaustive(pr)
    assert not res.feasible and res.n_bound == math.inf
    assert res.to_dict()["schedule"] is None


def test_exhaustive_budget_guard():
    pr = OptProblem(MessageCount.of(4), 0.11, LOG_1E3, 3, ((1, 40),) * 3, budget=100)
    with pytest.raises(BoxTooLarge):
        optimize_exhaustive(pr)


def test_stochastic_is_deterministic():
    pr = OptProblem(MessageCount.of(16), 0.11, math.log(1e-2), 5, ((1, 50),) * 5, budget=600)
    a = optimize_stochastic(pr, restarts=3, seed=4)
    b = optimize_stochastic(pr, restarts=3, seed=4)
    assert a.to_dict() == b.to_dict()
    assert a.feasible


def test_stochastic_close_to_exhaustive():
    pr = OptProblem(MessageCount.of(8), 0.11, math.log(1e-3), 3, ((4, 24), (9, 29), (17, 37)), budget=1000)
    ex = optimize_exhaustive(OptProblem(pr.m, pr.p, pr.log_eps_target, 3, pr.search_box, budget=10_000))
    st = optimize_stochastic(pr, restarts=8, seed=1)
    assert ex.n_bound <= st.n_bound <= 1.05 * ex.n_bound


def test_stochastic_warm_start_is_used():
    box = ((4, 24), (9, 29), (17, 37))
    ex = optimize_exhaustive(OptProblem(MessageCount.of(8), 0.11, math.log(1e-3), 3, box))
    pr = OptProblem(MessageCount.of(8), 0.11, math.log(1e-3), 3, box, budget=1)
    res = optimize_stochastic(pr, restarts=1, seed=0, starts=[ex.best_schedule.times], surrogate=False)
    assert res.evaluations == 1 and res.best_schedule == ex.best_schedule


def test_stochastic_rejects_long_schedules():
    pr = OptProblem(MessageCount.of(4), 0.11, LOG_1E3, 7, ((1, 20),) * 7)
    with pytest.raises(DomainError):
        optimize_stochastic(pr)


def test_sweep_basic_properties():
    pts = sweep_rate_curve(0.11, LOG_1E3, 3, [0, 2, 4])
    assert [q.log2_m for q in pts] == [0.0, 2.0, 4.0]
    assert pts[0].rate == 0.0
    assert all(q.rate < bsc_capacity(0.11) for q in pts)
    assert all(np.diff([q.n_bound for q in pts]) >= 0)
    again = sweep_rate_curve(0.11, LOG_1E3, 3, [0, 2, 4])
    assert again == pts


def test_sweep_needs_points():
    with pytest.raises(DomainError):
        sweep_rate_curve(0.11, LOG_1E3, 3, [])


def test_sweep_l5_uses_stochastic_search():
    tmpl = SweepTemplate(budget=300, restarts=2)
    pts = sweep_rate_curve(0.11, math.log(1e-2), 5, [4], tmpl)
    assert pts[0].feasible and pts[0].method == "stochastic"
    assert len(pts[0].schedule) == 5 and len(pts[0].gammas) == 2

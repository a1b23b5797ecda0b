import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlbf.channel import DomainError, Dmc, Bsc
from vlbf.rcu import MessageCount, log_rcu_table, rcu_bsc, rcu_general_mc

import oracles


def test_message_count():
    m = MessageCount.of(8)
    assert m.log2_m == 3.0
    assert m.log_m_minus_1 == pytest.approx(math.log(7), rel=1e-15)
    big = MessageCount.from_log2(400)
    assert big.log_m_minus_1 == pytest.approx(400 * math.log(2), rel=1e-15)
    assert MessageCount.from_log2(3).log_m_minus_1 == pytest.approx(math.log(7), rel=1e-13)
    assert MessageCount.of(1).log_m_minus_1 == -math.inf
    assert MessageCount.from_log2(0).log_m_minus_1 == -math.inf
    with pytest.raises(DomainError):
        MessageCount(2.0, 8)
    with pytest.raises(DomainError):
        MessageCount.from_log2(-1)


def test_rcu_single_message_is_zero():
    for n in (1, 5, 40):
        assert rcu_bsc(n, MessageCount.of(1), 0.11).value == -math.inf


def test_rcu_noiseless_limit():
    # only k = 0 carries mass: min{1, C(3,0)/8}
    assert rcu_bsc(3, MessageCount.of(2), 0.0).prob == pytest.approx(0.125, rel=1e-15)


def test_rcu_anchors():
    assert rcu_bsc(2, MessageCount.of(2), 0.11).prob == pytest.approx(0.356975, rel=1e-12)
    assert rcu_bsc(4, MessageCount.of(2), 0.11).prob == pytest.approx(0.180271451875, rel=1e-12)
    assert rcu_bsc(4, MessageCount.of(2), 0.11).prob == pytest.approx(0.1802715, abs=1e-7)


@pytest.mark.parametrize("p", [0.11, 0.3])
@pytest.mark.parametrize("M", [2, 4, 8])
def test_rcu_matches_exact_rationals(M, p):
    for n in range(1, 13):
        want = float(oracles.rcu_bsc(n, M, p))
        assert rcu_bsc(n, MessageCount.of(M), p).prob == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("M", [2, 4, 8, 1024])
def test_log2_and_exact_representations_agree(M):
    for n in (1, 10, 100):
        a = rcu_bsc(n, MessageCount.of(M), 0.11).value
        b = rcu_bsc(n, MessageCount.from_log2(math.log2(M)), 0.11).value
        assert math.exp(a) == pytest.approx(math.exp(b), rel=1e-12)


@given(n=st.integers(1, 80), log2m=st.floats(0, 60), p=st.floats(0.01, 0.5))
@settings(max_examples=80, deadline=None)
def test_rcu_is_a_probability_and_monotone_in_m(n, log2m, p):
    a = rcu_bsc(n, MessageCount.from_log2(log2m), p).value
    b = rcu_bsc(n, MessageCount.from_log2(log2m + 1.5), p).value
    assert a <= 0.0
    assert b >= a - 1e-12


def test_rcu_large_arguments_finite():
    for n in (10, 500, 1000):
        for log2m in (1, 100, 500):
            v = rcu_bsc(n, MessageCount.from_log2(log2m), 0.11).value
            assert math.isfinite(v) and v <= 0


def test_rcu_domain():
    with pytest.raises(DomainError):
        rcu_bsc(0, MessageCount.of(2), 0.11)
    with pytest.raises(DomainError):
        rcu_bsc(3, MessageCount.of(2), 0.7)


def test_log_rcu_table():
    t = log_rcu_table(6, MessageCount.of(2), 0.11)
    assert math.exp(t[2]) == pytest.approx(0.356975, rel=1e-12)
    assert t[0] == 0.0


def test_general_mc_matches_exact_bsc():
    dmc = Bsc(0.11).as_dmc()
    est = rcu_general_mc(dmc, [0.5, 0.5], 2, MessageCount.of(2), 20_000, seed=3)
    assert abs(est.mean - 0.356975) <= 3 * est.half_width
    assert est.half_width > 0


def test_general_mc_longer_block():
    dmc = Bsc(0.11).as_dmc()
    est = rcu_general_mc(dmc, [0.5, 0.5], 6, MessageCount.of(4), 20_000, seed=11)
    want = float(oracles.rcu_bsc(6, 4, 0.11))
    assert abs(est.mean - want) <= 3 * est.half_width


def test_general_mc_single_message_and_determinism():
    dmc = Dmc([[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]])
    assert rcu_general_mc(dmc, [0.5, 0.5], 4, MessageCount.of(1), 1000, seed=0).mean == 0.0
    a = rcu_general_mc(dmc, [0.5, 0.5], 4, MessageCount.of(3), 2000, seed=5)
    b = rcu_general_mc(dmc, [0.5, 0.5], 4, MessageCount.of(3), 2000, seed=5)
    assert a == b


def test_general_mc_rejects_degenerate_input():
    dmc = Bsc(0.11).as_dmc()
    with pytest.raises(DomainError):
        rcu_general_mc(dmc, [1.0, 0.0], 2, MessageCount.of(2), 1000, seed=0)
    with pytest.raises(DomainError):
        rcu_general_mc(dmc, [0.6, 0.6], 2, MessageCount.of(2), 1000, seed=0)

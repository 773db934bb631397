import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilreg.interval_model import (
    InfeasibleExponent,
    LengthSchemeB,
    LengthSchemeC,
    build_family,
    choose_exponents_b,
    choose_exponents_c,
    critical_alpha,
    fiber_corrected_total,
    fiber_total,
    infeasibility_witness,
    length_b,
    length_c,
    lengths,
    tail_sum,
    truncated_total,
    validate_b,
    validate_c,
)


def test_concrete_exponents_d3():
    s = choose_exponents_b(3, 0.2)
    assert s.p == (Fraction(25), Fraction(25, 2), Fraction(5, 4))
    assert sum(1 / p for p in s.p) == Fraction(23, 25)  # 0.92 < 1
    assert validate_b(s) == []


def test_critical_alpha_is_infeasible():
    with pytest.raises(InfeasibleExponent) as exc:
        choose_exponents_b(3, Fraction(1, 3))
    assert exc.value.violated


def test_validate_b_examples():
    assert validate_b(choose_exponents_b(4, 0.1)) == []
    assert "(i_B)" in validate_b(LengthSchemeB(3, 0.2, (2, 3, 1.25)))
    for d in range(3, 7):
        a = critical_alpha(d)
        probe = LengthSchemeB(d, a, tuple([5 / (j * a) for j in range(1, d)] + [Fraction(5, 4)]))
        assert validate_b(probe)


@given(st.integers(3, 8), st.fractions(0, 1).filter(lambda x: 0 < x < 1))
def test_concrete_choice_validates_below_critical(d, frac):
    alpha = frac * critical_alpha(d)
    assert validate_b(choose_exponents_b(d, alpha)) == []


@pytest.mark.parametrize("d", [3, 4, 5])
def test_no_random_exponents_above_critical(d):
    rng = random.Random(d)
    crit = critical_alpha(d)
    for alpha in (crit, crit * Fraction(5, 4), Fraction(1, 2) + crit / 2):
        if alpha >= 1:
            continue
        for _ in range(10**4 // 3):
            p = sorted((Fraction(rng.uniform(1.0001, 60)).limit_denominator(10**6) for _ in range(d)), reverse=True)
            assert validate_b(LengthSchemeB(d, alpha, tuple(p))) != []
        # chaining the two upper-bound conditions forces sum 1/p_j >= 1
        for pd in (Fraction(101, 100), Fraction(5, 4), Fraction(3), Fraction(50)):
            assert infeasibility_witness(d, alpha, pd) >= 1


def test_witness_below_critical_is_below_one():
    assert infeasibility_witness(3, Fraction(1, 5), Fraction(5, 4)) < 1


def test_lengths_examples():
    s = choose_exponents_b(3, 0.2)
    assert length_b(s, (0, 0, 0)) == 1.0
    assert length_b(s, (0, 0, 1)) == 0.5
    assert length_b(s, (0, 1, 1)) < length_b(s, (0, 0, 1))
    c = LengthSchemeC(1, 0.5, Fraction(11, 10))
    assert length_c(c, 0, 0) == 1.0
    assert length_c(c, 1, 0) == 0.5
    assert length_c(c, 0, 2) == pytest.approx(1 / (2**1.1 + 1), rel=1e-15)


@given(st.lists(st.integers(-30, 30), min_size=3, max_size=3), st.integers(0, 2))
def test_length_monotone(v, k):
    s = choose_exponents_b(3, 0.2)
    w = list(v)
    w[k] += 1 if w[k] >= 0 else -1
    assert length_b(s, w) <= length_b(s, v)
    # the denominator grows strictly; compared exactly with integer powers of rationals
    def denom(u):
        return sum(Fraction(abs(x)) ** int(pj) if pj == int(pj) else mpmath.mpf(abs(x)) ** mpmath.mpf(float(pj)) for x, pj in zip(u, s.p))

    with mpmath.workdps(80):
        assert denom(w) > denom(v)


def test_choose_exponents_c():
    s = choose_exponents_c(2, 0.5)
    assert validate_c(s) == []
    assert s.p == (2 * s.q - 1) / (s.q - 1)
    s99 = choose_exponents_c(3, 0.99)
    assert validate_c(s99) == []
    assert s99.q - 1 < choose_exponents_c(3, 0.5).q - 1
    with pytest.raises(InfeasibleExponent):
        choose_exponents_c(2, 1.0)


def test_single_interval_family():
    s = choose_exponents_b(3, 0.2)
    f = build_family(s, 0, normalize=True)
    assert len(f) == 1
    assert f.left[0] == 0.0 and f.right[0] == 1.0


def test_family_positions_abut():
    s = choose_exponents_b(3, 0.2)
    f = build_family(s, 4)
    left, right = f.left, f.right
    assert np.all(np.diff(left) >= 0)
    assert np.allclose(right[:-1], left[1:], rtol=1e-14, atol=1e-14)
    # inside a fiber the local offsets abut to relative precision
    same = f.fiber_of[1:] == f.fiber_of[:-1]
    nxt = f.local_left[:-1] + f.lengths[:-1]
    assert np.allclose(nxt[same], f.local_left[1:][same], rtol=1e-14, atol=0)
    assert f.right[-1] == pytest.approx(f.total, rel=1e-13)
    # lexicographic order, last coordinate fastest
    idx = [tuple(r) for r in f.indices.tolist()]
    assert idx == sorted(idx)


def test_family_roundoff_budget():
    s = choose_exponents_b(3, 0.2)
    f = build_family(s, 20)  # 68921 intervals
    assert len(f) == 41**3
    drift = abs(f.right[-1] - math.fsum(f.lengths.tolist()))
    assert drift < 1e-12 * max(1, len(f) / 1e6) * f.total


def test_row_of_inverts_indices():
    s = choose_exponents_b(3, 0.2)
    f = build_family(s, 3)
    assert np.array_equal(f.row_of(f.indices), np.arange(len(f)))
    assert f.row_of(np.array([[4, 0, 0]]))[0] == -1


def test_truncated_totals_grow_and_stay_finite():
    s = choose_exponents_b(3, 0.2)
    t20, t40 = truncated_total(s, 20), truncated_total(s, 40)
    assert t20 < t40 < math.inf
    f = build_family(s, 5)
    assert truncated_total(s, 5) == pytest.approx(f.total, rel=1e-13)


def test_fiber_corrected_doubling_below_one_percent():
    s = choose_exponents_b(3, 0.2)
    totals = [fiber_corrected_total(s, r) for r in (32, 64, 128, 256)]
    assert all(a < b for a, b in zip(totals, totals[1:]))
    assert (totals[-1] - totals[-2]) / totals[-2] < 0.01
    assert (totals[-2] - totals[-3]) / totals[-3] < 0.01


def test_raw_truncated_totals_follow_fiber_tail_law():
    # raw box totals miss fiber tails of size ~ R^(1 - p_d) = R^(-1/4)
    s = choose_exponents_b(3, 0.2)
    t = [truncated_total(s, r) for r in (16, 32, 64, 128)]
    diffs = [b - a for a, b in zip(t, t[1:])]
    ratios = [a / b for a, b in zip(diffs, diffs[1:])]
    assert all(1.0 < r <= 2**0.25 for r in ratios)
    assert ratios[0] < ratios[1]


@pytest.mark.parametrize("p", [1.1, 1.25, 2.0, 8.0])
def test_tail_sum_against_direct_sum(p):
    c = np.array([1.0, 3.5, 1e3, 1e8])
    got = tail_sum(c, p, 5)
    mpmath.mp.dps = 30
    n = 1000
    breaks = [n, 10 * n, 100 * n] + [mpmath.mpf(10) ** k for k in range(6, 300, 2)] + [mpmath.inf]
    for ci, g in zip(c, got):
        f = lambda x: 1 / (mpmath.mpf(ci) + x ** mpmath.mpf(p))
        # direct head, quadrature tail split by decades, two correction terms
        head = math.fsum(1 / (ci + j**p) for j in range(5, n))
        ref = head + mpmath.quad(f, breaks) + f(mpmath.mpf(n)) / 2 - mpmath.diff(f, mpmath.mpf(n)) / 12
        assert g == pytest.approx(float(ref), rel=1e-9)


def test_fiber_total_is_symmetric_sum():
    c = np.array([2.0])
    j = np.arange(-10**6, 10**6 + 1, dtype=float)
    direct = math.fsum((1 / (2.0 + np.abs(j) ** 3.0)).tolist())
    assert fiber_total(c, 3.0)[0] == pytest.approx(direct, rel=1e-10)


def test_vector_lengths_match_scalar():
    s = choose_exponents_b(3, 0.2)
    pts = np.array([[0, 0, 0], [1, -2, 3], [-1, 1, 7]])
    assert np.allclose(lengths(s, pts), [length_b(s, p) for p in pts.tolist()], rtol=1e-15)

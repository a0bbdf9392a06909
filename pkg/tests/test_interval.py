from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

import oracles
from powexp import batch as bt
from powexp.interval import Interval, IntervalDomainError, iv_exp, iv_ln, iv_pow, iv_powi


def test_pow_exact_integer_power_is_tight():
    r = iv_pow(Interval(2, 2), Interval(3, 3))
    assert r.lo <= 8 <= r.hi
    assert r.hi - r.lo <= mpmath.ldexp(8, -90)


def test_pow_base_one():
    r = iv_pow(Interval(1, 1), Interval(-5, 7))
    assert r.lo <= 1 <= r.hi
    assert r.hi - r.lo <= mpmath.ldexp(1, -80)


def test_pow_base_touching_zero_matches_sampling():
    r = iv_pow(Interval(0, 0.5), Interval(1, 2))
    xs = np.linspace(0, 0.5, 1001)
    ys = np.linspace(1, 2, 1001)
    vals = xs[:, None] ** ys[None, :]
    assert r.lo <= vals.min() and vals.max() <= r.hi
    assert r.lo == 0 and r.hi >= 0.5


def test_ln_e_is_one_within_two_ulp():
    r = iv_ln(Interval.e(96))
    assert r.lo <= 1 <= r.hi
    assert r.hi - r.lo <= mpmath.ldexp(2, -95)


def test_zero_power_convention():
    assert iv_pow(Interval(0, 0), Interval(0, 0)) == Interval(1, 1)
    z = iv_pow(Interval(0, 0), Interval(0.5, 2))
    assert z.lo == 0 and z.hi == 0
    assert iv_pow(Interval(0, 0), Interval(-1, 1)).hi == mpmath.inf


def test_negative_base_rejected_for_real_exponent():
    with pytest.raises(IntervalDomainError):
        iv_pow(Interval(-1, 1), Interval(0.5, 0.5))


def test_even_integer_power_of_straddling_interval():
    r = iv_powi(Interval(-2, 1), 2)
    assert r.lo == 0 and r.hi >= 4


def test_empty_propagates():
    e = Interval.empty()
    assert (e + Interval(1, 2)).is_empty
    assert iv_exp(e).is_empty


def test_endpoints_are_not_rounded_by_ambient_precision():
    with mpmath.workprec(300):
        third = mpmath.mpf(1) / 3
    x = Interval(third, third, prec=200)
    with mpmath.workprec(53):
        lo, hi = x.lo, x.hi
    with mpmath.workprec(300):
        assert lo <= third <= hi
        assert hi - lo < mpmath.ldexp(1, -190)


def test_inclusion_isotonicity_exp():
    small = iv_exp(Interval(0.2, 0.3))
    big = iv_exp(Interval(0.1, 0.4))
    assert small.subset(big)


@pytest.mark.parametrize("op", oracles.SCALAR_OPS)
def test_scalar_containment_sampled(op):
    assert oracles.scalar_violations(op, 2000, seed=1) == 0


@pytest.mark.parametrize("op", oracles.SCALAR_OPS)
def test_batch_containment_sampled(op):
    assert oracles.batch_violations(op, 5000, seed=1) == 0


def test_batch_frac_interval_brackets_rationals():
    from fractions import Fraction

    for q in (Fraction(1, 3), Fraction(-7, 10), Fraction(5, 1), Fraction(1, 10**20)):
        lo, hi = bt.frac_interval(q)
        assert Fraction(lo) <= q <= Fraction(hi)


def test_batch_e_constant_brackets_e():
    with mpmath.workprec(200):
        assert bt.E_LO < mpmath.e < bt.E_HI


def test_batch_directed_float_conversion():
    with mpmath.workprec(200):
        x = mpmath.mpf(2).sqrt()
        assert bt.down_float(x) <= x <= bt.up_float(x)
        assert math.nextafter(bt.down_float(x), math.inf) == bt.up_float(x)

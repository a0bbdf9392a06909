"""Outward-rounded interval arithmetic on arbitrary-precision binary endpoints.

Endpoints are raw mpmath ``mpf`` tuples rounded with directed rounding after
every operation.  Transcendental results are computed with guard bits and then
widened by two guard ulps before the final directed rounding, so correctness
does not hinge on mpmath's transcendental functions being correctly rounded.

Bases of ``pow`` are restricted to ``X.lo >= 0`` except for point integer
exponents.  The zero-power convention is ``0**0 == 1`` and ``0**y == 0`` for
``y > 0``.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Real

import mpmath
from mpmath.libmp import (
    finf,
    fninf,
    fone,
    fzero,
    from_float,
    from_int,
    from_rational,
    from_str,
    mpf_abs,
    mpf_add,
    mpf_cmp,
    mpf_div,
    mpf_e,
    mpf_exp,
    mpf_log,
    mpf_mul,
    mpf_neg,
    mpf_pos,
    mpf_pow_int,
    mpf_shift,
    mpf_sqrt,
    mpf_sub,
    round_ceiling,
    round_floor,
    to_str,
)

DEFAULT_PREC = 96
GUARD_BITS = 12
# smallest positive double; used in place of 0 when a power base touches zero
TINY = from_float(5e-324)


class IntervalDomainError(ValueError):
    """An operation was applied outside its mathematical domain."""


def _exact(raw) -> mpmath.mpf:
    """Wrap a raw endpoint without rounding it to the ambient precision."""
    return mpmath.mp.make_mpf(raw)


def _is_finite(x) -> bool:
    return x not in (finf, fninf)


def _lt(x, y) -> bool:
    return mpf_cmp(x, y) < 0


def _min(*xs):
    best = xs[0]
    for x in xs[1:]:
        if mpf_cmp(x, best) < 0:
            best = x
    return best


def _max(*xs):
    best = xs[0]
    for x in xs[1:]:
        if mpf_cmp(x, best) > 0:
            best = x
    return best


def _widen(x, wp, prec, rnd):
    """Round a guard-precision transcendental result outward to ``prec`` bits."""
    if x == fzero or not _is_finite(x):
        return x
    slack = mpf_shift(mpf_abs(x), 2 - wp)
    if rnd is round_floor:
        x = mpf_sub(x, slack, wp, round_floor)
    else:
        x = mpf_add(x, slack, wp, round_ceiling)
    return mpf_pos(x, prec, rnd)


def _mul_dir(x, y, prec, rnd):
    if x == fzero or y == fzero:
        return fzero
    return mpf_mul(x, y, prec, rnd)


def to_mpf_raw(value, prec: int, rnd):
    """Convert a Python/mpmath number to a raw mpf rounded in direction ``rnd``."""
    if isinstance(value, tuple):
        return mpf_pos(value, prec, rnd)
    if isinstance(value, mpmath.mpf):
        return mpf_pos(value._mpf_, prec, rnd)
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return from_int(value, prec, rnd)
    if isinstance(value, Fraction):
        return from_rational(value.numerator, value.denominator, prec, rnd)
    if isinstance(value, float):
        if value == float("inf"):
            return finf
        if value == float("-inf"):
            return fninf
        return mpf_pos(from_float(value), prec, rnd)
    if isinstance(value, str):
        return from_str(value, prec, rnd)
    if isinstance(value, Real):
        return from_float(float(value), prec, rnd)
    raise TypeError(f"cannot convert {value!r} to an interval endpoint")


class Interval:
    """Closed interval ``[lo, hi]`` with endpoints at ``prec`` bits.

    The empty interval is the singleton returned by :meth:`empty`; it is never
    encoded as ``lo > hi``.
    """

    __slots__ = ("_lo", "_hi", "prec")

    def __init__(self, lo, hi=None, prec: int = DEFAULT_PREC):
        if hi is None:
            hi = lo
        self.prec = prec
        if lo is None:
            self._lo = self._hi = None
            return
        self._lo = to_mpf_raw(lo, prec, round_floor)
        self._hi = to_mpf_raw(hi, prec, round_ceiling)
        if mpf_cmp(self._lo, self._hi) > 0:
            raise ValueError(f"interval endpoints out of order: {lo!r} > {hi!r}")

    @classmethod
    def _raw(cls, lo, hi, prec: int) -> "Interval":
        iv = cls.__new__(cls)
        iv._lo, iv._hi, iv.prec = lo, hi, prec
        return iv

    @classmethod
    def empty(cls, prec: int = DEFAULT_PREC) -> "Interval":
        return cls(None, prec=prec)

    @classmethod
    def e(cls, prec: int = DEFAULT_PREC) -> "Interval":
        return cls._raw(
            mpf_e(prec, round_floor), mpf_e(prec, round_ceiling), prec
        )

    @classmethod
    def point(cls, value, prec: int = DEFAULT_PREC) -> "Interval":
        return cls(value, value, prec=prec)

    @property
    def is_empty(self) -> bool:
        return self._lo is None

    @property
    def lo(self) -> mpmath.mpf:
        return _exact(self._lo)

    @property
    def hi(self) -> mpmath.mpf:
        return _exact(self._hi)

    @property
    def width(self) -> mpmath.mpf:
        return _exact(mpf_sub(self._hi, self._lo, self.prec, round_ceiling))

    def mid(self) -> mpmath.mpf:
        return _exact(mpf_shift(mpf_add(self._lo, self._hi, self.prec + 1), -1))

    def contains(self, x) -> bool:
        if self.is_empty:
            return False
        lo = to_mpf_raw(x, self.prec + 64, round_floor)
        hi = to_mpf_raw(x, self.prec + 64, round_ceiling)
        return mpf_cmp(self._lo, lo) <= 0 and mpf_cmp(hi, self._hi) <= 0

    def subset(self, other: "Interval") -> bool:
        if self.is_empty:
            return True
        if other.is_empty:
            return False
        return mpf_cmp(other._lo, self._lo) <= 0 and mpf_cmp(self._hi, other._hi) <= 0

    def hull(self, other: "Interval") -> "Interval":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Interval._raw(
            _min(self._lo, other._lo), _max(self._hi, other._hi), self.prec
        )

    def __repr__(self) -> str:
        if self.is_empty:
            return "Interval.empty()"
        digits = max(3, int(self.prec * 0.30103) + 2)
        return f"[{to_str(self._lo, digits)}, {to_str(self._hi, digits)}]"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Interval):
            return NotImplemented
        return self._lo == other._lo and self._hi == other._hi

    def __hash__(self):
        return hash((self._lo, self._hi))

    def _coerce(self, other) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval(other, other, prec=self.prec)

    def __add__(self, other):
        return iv_add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, self._coerce(other))

    def __rsub__(self, other):
        return iv_sub(self._coerce(other), self)

    def __mul__(self, other):
        return iv_mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, self._coerce(other))

    def __rtruediv__(self, other):
        return iv_div(self._coerce(other), self)

    def __neg__(self):
        return iv_neg(self)

    def __pow__(self, other):
        return iv_pow(self, self._coerce(other))


def _prec(*xs: Interval) -> int:
    return max(x.prec for x in xs)


def iv_neg(x: Interval) -> Interval:
    if x.is_empty:
        return x
    return Interval._raw(mpf_neg(x._hi), mpf_neg(x._lo), x.prec)


def iv_add(x: Interval, y: Interval) -> Interval:
    p = _prec(x, y)
    if x.is_empty or y.is_empty:
        return Interval.empty(p)
    return Interval._raw(
        mpf_add(x._lo, y._lo, p, round_floor), mpf_add(x._hi, y._hi, p, round_ceiling), p
    )


def iv_sub(x: Interval, y: Interval) -> Interval:
    p = _prec(x, y)
    if x.is_empty or y.is_empty:
        return Interval.empty(p)
    return Interval._raw(
        mpf_sub(x._lo, y._hi, p, round_floor), mpf_sub(x._hi, y._lo, p, round_ceiling), p
    )


def iv_mul(x: Interval, y: Interval) -> Interval:
    p = _prec(x, y)
    if x.is_empty or y.is_empty:
        return Interval.empty(p)
    ends = [(a, b) for a in (x._lo, x._hi) for b in (y._lo, y._hi)]
    lo = _min(*[_mul_dir(a, b, p, round_floor) for a, b in ends])
    hi = _max(*[_mul_dir(a, b, p, round_ceiling) for a, b in ends])
    return Interval._raw(lo, hi, p)


def iv_div(x: Interval, y: Interval) -> Interval:
    p = _prec(x, y)
    if x.is_empty or y.is_empty:
        return Interval.empty(p)
    if mpf_cmp(y._lo, fzero) <= 0 <= mpf_cmp(y._hi, fzero):
        raise IntervalDomainError(f"division by an interval containing 0: {y!r}")
    ends = [(a, b) for a in (x._lo, x._hi) for b in (y._lo, y._hi)]
    lo = _min(*[mpf_div(a, b, p, round_floor) for a, b in ends])
    hi = _max(*[mpf_div(a, b, p, round_ceiling) for a, b in ends])
    return Interval._raw(lo, hi, p)


def _exp_dir(x, prec, rnd):
    if x == fninf:
        return fzero
    if x == finf:
        return finf
    wp = prec + GUARD_BITS
    return _widen(mpf_exp(x, wp, rnd), wp, prec, rnd)


def _log_dir(x, prec, rnd):
    if x == fzero:
        return fninf
    if x == finf:
        return finf
    if x == fone:
        return fzero
    wp = prec + GUARD_BITS
    return _widen(mpf_log(x, wp, rnd), wp, prec, rnd)


def iv_exp(x: Interval) -> Interval:
    if x.is_empty:
        return x
    p = x.prec
    return Interval._raw(_exp_dir(x._lo, p, round_floor), _exp_dir(x._hi, p, round_ceiling), p)


def iv_ln(x: Interval) -> Interval:
    if x.is_empty:
        return x
    p = x.prec
    if mpf_cmp(x._hi, fzero) <= 0:
        raise IntervalDomainError(f"ln of a nonpositive interval: {x!r}")
    lo = fninf if mpf_cmp(x._lo, fzero) <= 0 else _log_dir(x._lo, p, round_floor)
    return Interval._raw(lo, _log_dir(x._hi, p, round_ceiling), p)


def iv_sqrt(x: Interval) -> Interval:
    if x.is_empty:
        return x
    p = x.prec
    if mpf_cmp(x._hi, fzero) < 0:
        raise IntervalDomainError(f"sqrt of a negative interval: {x!r}")
    lo = fzero if mpf_cmp(x._lo, fzero) <= 0 else mpf_sqrt(x._lo, p, round_floor)
    hi = finf if x._hi == finf else mpf_sqrt(x._hi, p, round_ceiling)
    return Interval._raw(lo, hi, p)


def _point_integer(y: Interval):
    if y.is_empty or y._lo != y._hi or not _is_finite(y._lo):
        return None
    v = _exact(y._lo)
    if v != int(v):
        return None
    return int(v)


def _pow_int_dir(a, n: int, prec, rnd):
    # a >= 0 or n even/odd handled by caller; this only rounds
    if n == 0:
        return fone
    if a == fzero:
        return fzero
    if a == finf:
        return finf
    if a == fninf:
        return finf if n % 2 == 0 else fninf
    return mpf_pow_int(a, n, prec, rnd)


def iv_powi(x: Interval, n: int) -> Interval:
    """``x**n`` for an integer ``n``; negative bases are allowed here."""
    if x.is_empty:
        return x
    p = x.prec
    if n == 0:
        return Interval._raw(fone, fone, p)
    if n < 0:
        return iv_div(Interval._raw(fone, fone, p), iv_powi(x, -n))
    if n % 2 == 1:
        return Interval._raw(
            _pow_int_dir(x._lo, n, p, round_floor), _pow_int_dir(x._hi, n, p, round_ceiling), p
        )
    # even power: |x|**n
    if mpf_cmp(x._lo, fzero) >= 0:
        lo, hi = x._lo, x._hi
        return Interval._raw(
            _pow_int_dir(lo, n, p, round_floor), _pow_int_dir(hi, n, p, round_ceiling), p
        )
    if mpf_cmp(x._hi, fzero) <= 0:
        return Interval._raw(
            _pow_int_dir(mpf_neg(x._hi), n, p, round_floor),
            _pow_int_dir(mpf_neg(x._lo), n, p, round_ceiling),
            p,
        )
    top = _max(mpf_neg(x._lo), x._hi)
    return Interval._raw(fzero, _pow_int_dir(top, n, p, round_ceiling), p)


def iv_pow(x: Interval, y: Interval) -> Interval:
    """``x**y`` computed as ``exp(y*ln x)`` with the zero-power convention."""
    p = _prec(x, y)
    if x.is_empty or y.is_empty:
        return Interval.empty(p)
    n = _point_integer(y)
    if n is not None:
        return iv_powi(x, n)
    if mpf_cmp(x._lo, fzero) < 0:
        raise IntervalDomainError(f"pow with a negative base interval: {x!r}")
    if mpf_cmp(x._lo, fzero) > 0:
        return iv_exp(iv_mul(y, iv_ln(x)))
    # base touches zero
    pieces = []
    if mpf_cmp(y._lo, fzero) <= 0 <= mpf_cmp(y._hi, fzero):
        pieces.append(fone)
    if mpf_cmp(y._hi, fzero) > 0:
        pieces.append(fzero)
    if mpf_cmp(y._lo, fzero) < 0:
        pieces.append(finf)
    out = Interval._raw(_min(*pieces), _max(*pieces), p)
    if mpf_cmp(x._hi, fzero) > 0:
        tail = Interval._raw(_min(TINY, x._hi), x._hi, p)
        out = out.hull(iv_exp(iv_mul(y, iv_ln(tail))))
    return out


def iv_hull(*xs: Interval) -> Interval:
    out = xs[0]
    for x in xs[1:]:
        out = out.hull(x)
    return out


__all__ = [
    "DEFAULT_PREC",
    "Interval",
    "IntervalDomainError",
    "iv_add",
    "iv_sub",
    "iv_mul",
    "iv_div",
    "iv_neg",
    "iv_exp",
    "iv_ln",
    "iv_sqrt",
    "iv_pow",
    "iv_powi",
    "iv_hull",
]

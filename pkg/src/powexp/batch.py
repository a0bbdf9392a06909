"""Vectorized binary64 evaluation of expression lists over many boxes at once.

Interval results are outward rounded: every endpoint is stepped one ulp
outward with ``nextafter`` after each operation, and the libm results of
``exp``/``log``/``pow`` are additionally widened by a relative margin that
dominates their documented error.  NaN endpoints (inf - inf and the like) are
replaced by the matching infinity, so results never lose containment.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from powexp.expr import Expr, postorder

NINF = -np.inf
PINF = np.inf
# relative widening for transcendental libm calls (2^-48 = 32 ulp at binary64)
TRANS_PAD = 2.0**-48
TINY = 5e-324
LN_TINY = math.log(TINY)


def _dn(x):
    return np.nextafter(x, NINF)


def _up(x):
    return np.nextafter(x, PINF)


def _fix(lo, hi):
    lo = np.where(np.isnan(lo), NINF, lo)
    hi = np.where(np.isnan(hi), PINF, hi)
    return lo, hi


def frac_interval(q: Fraction) -> tuple[float, float]:
    """Tightest binary64 interval around a rational."""
    f = float(q)
    fq = Fraction(f)
    lo = f if fq <= q else math.nextafter(f, -math.inf)
    hi = f if fq >= q else math.nextafter(f, math.inf)
    return lo, hi


E_LO, E_HI = 2.718281828459045, 2.7182818284590455  # e lies strictly between


def down_float(x) -> float:
    """Largest binary64 number not above ``x`` (mpf, Fraction or float)."""
    q = Fraction(x) if not hasattr(x, "man_exp") else _mpf_fraction(x)
    return frac_interval(q)[0]


def up_float(x) -> float:
    q = Fraction(x) if not hasattr(x, "man_exp") else _mpf_fraction(x)
    return frac_interval(q)[1]


def _mpf_fraction(x) -> Fraction:
    man, exp = x.man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


# ------------------------------------------------------------ interval ops


def iv_add(al, ah, bl, bh):
    return _fix(_dn(al + bl), _up(ah + bh))


def iv_sub(al, ah, bl, bh):
    return _fix(_dn(al - bh), _up(ah - bl))


def _prod(x, y):
    p = x * y
    # 0 * inf only arises from a finite zero endpoint times an unbounded one
    return np.where(np.isnan(p), 0.0, p)


def iv_mul(al, ah, bl, bh):
    p1, p2, p3, p4 = _prod(al, bl), _prod(al, bh), _prod(ah, bl), _prod(ah, bh)
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return _fix(_dn(lo), _up(hi))


def iv_div(al, ah, bl, bh):
    bad = (bl <= 0) & (bh >= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q1, q2, q3, q4 = al / bl, al / bh, ah / bl, ah / bh
    lo = np.minimum(np.minimum(q1, q2), np.minimum(q3, q4))
    hi = np.maximum(np.maximum(q1, q2), np.maximum(q3, q4))
    lo, hi = _fix(_dn(lo), _up(hi))
    nan = np.isnan(q1) | np.isnan(q2) | np.isnan(q3) | np.isnan(q4)
    lo = np.where(bad | nan, NINF, lo)
    hi = np.where(bad | nan, PINF, hi)
    return lo, hi


def iv_neg(al, ah):
    return -ah, -al


def _pad_lo(x):
    return _dn(x - np.abs(x) * TRANS_PAD)


def _pad_hi(x):
    return _up(x + np.abs(x) * TRANS_PAD)


def iv_exp(al, ah):
    with np.errstate(over="ignore"):
        lo, hi = np.exp(al), np.exp(ah)
    lo = np.where(al < -700.0, 0.0, np.maximum(_pad_lo(lo), 0.0))
    return lo, _pad_hi(hi)


def iv_ln(al, ah):
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(al > 0, np.log(np.where(al > 0, al, 1.0)), NINF)
        hi = np.where(ah > 0, np.log(np.where(ah > 0, ah, 1.0)), np.nan)
    lo, hi = _pad_lo(lo), _pad_hi(hi)
    # whole interval outside the domain: report an unbounded result
    bad = np.isnan(hi)
    return np.where(bad, NINF, lo), np.where(bad, PINF, hi)


def iv_sqrt(al, ah):
    with np.errstate(invalid="ignore"):
        lo = np.where(al > 0, _dn(np.sqrt(np.maximum(al, 0.0))), 0.0)
        hi = _up(np.sqrt(np.maximum(ah, 0.0)))
    lo = np.maximum(lo, 0.0)
    bad = ah < 0
    return np.where(bad, NINF, lo), np.where(bad, PINF, hi)


def _ipow(x, n):
    with np.errstate(over="ignore"):
        return np.power(x, float(n))


def iv_powi(al, ah, n: int):
    if n == 0:
        return np.ones_like(al), np.ones_like(ah)
    if n < 0:
        lo, hi = iv_powi(al, ah, -n)
        return iv_div(np.ones_like(lo), np.ones_like(hi), lo, hi)
    if n == 1:
        return al, ah
    pl, ph = _ipow(al, n), _ipow(ah, n)
    if n % 2:
        lo, hi = pl, ph
    else:
        straddle = (al < 0) & (ah > 0)
        lo = np.where(al >= 0, pl, np.where(ah <= 0, ph, 0.0))
        hi = np.where(al >= 0, ph, np.where(ah <= 0, pl, np.maximum(pl, ph)))
        lo = np.where(straddle, 0.0, lo)
    lo, hi = _pad_lo(lo), _pad_hi(hi)
    if n % 2 == 0:
        lo = np.maximum(lo, 0.0)
    return _fix(lo, hi)


def iv_pow(al, ah, bl, bh):
    """x^y for x >= 0 with 0^0 = 1 and 0^y = 0 for y > 0.

    Bases whose lower endpoint is negative only through rounding (above
    -1e-300) are clipped to 0; genuinely negative bases give an unbounded
    result.
    """
    neg_base = al < -1e-300
    al = np.maximum(al, 0.0)
    touch = al <= 0.0
    safe_lo = np.where(touch, TINY, al)
    safe_hi = np.maximum(ah, TINY)
    ll, lh = iv_ln(safe_lo, safe_hi)
    ll = np.where(touch, LN_TINY - 1.0, ll)
    pl, ph = iv_mul(ll, lh, bl, bh)
    lo, hi = iv_exp(pl, ph)
    # values at x = 0: 1 if 0 in Y, 0 if Y reaches above 0, inf if Y below 0
    lo = np.where(touch & (bh > 0), 0.0, lo)
    hi = np.where(touch & (bl <= 0) & (bh >= 0), np.maximum(hi, 1.0), hi)
    hi = np.where(touch & (bl < 0), PINF, hi)
    # exact zero base: the interval is {0, 1} restricted by Y
    zero = ah <= 0.0
    zlo = np.where(bl > 0, 0.0, np.where(bh < 0, PINF, np.where(bh > 0, 0.0, 1.0)))
    zhi = np.where(bl > 0, 0.0, np.where(bl < 0, PINF, 1.0))
    lo = np.where(zero, zlo, lo)
    hi = np.where(zero, zhi, hi)
    lo = np.where(neg_base, NINF, lo)
    hi = np.where(neg_base, PINF, hi)
    return lo, hi


# -------------------------------------------------------------- point ops


def _pt_pow(x, y):
    with np.errstate(all="ignore"):
        return np.power(x, y)


_POINT = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "neg": np.negative,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "pow": _pt_pow,
}

_IV = {
    "add": iv_add,
    "sub": iv_sub,
    "mul": iv_mul,
    "div": iv_div,
    "neg": iv_neg,
    "exp": iv_exp,
    "ln": iv_ln,
    "sqrt": iv_sqrt,
    "pow": iv_pow,
}

_PY = {
    "add": "({0} + {1})",
    "sub": "({0} - {1})",
    "mul": "({0} * {1})",
    "div": "_div({0}, {1})",
    "neg": "(-{0})",
    "exp": "_exp({0})",
    "ln": "_log({0})",
    "sqrt": "_sqrt({0})",
    "pow": "_pow({0}, {1})",
}


def _py_div(a, b):
    if b == 0.0:
        return math.nan
    return a / b


def _py_exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _py_log(a):
    if a > 0:
        return math.log(a)
    return -math.inf if a == 0 else math.nan


def _py_sqrt(a):
    return math.sqrt(a) if a >= 0 else math.nan


def _py_pow(x, y):
    if x == 0.0:
        return 1.0 if y == 0 else (0.0 if y > 0 else math.inf)
    try:
        return math.pow(x, y)
    except (OverflowError, ValueError):
        return math.nan if x < 0 else math.inf


class Program:
    """A list of root expressions compiled to straight-line code.

    Shared subtrees are evaluated once (nodes are interned, so structural
    sharing is exact).  ``names`` fixes the column order of input arrays.
    """

    def __init__(self, roots: list[Expr], names: list[str]):
        self.roots = list(roots)
        self.names = list(names)
        col = {n: i for i, n in enumerate(self.names)}
        order = postorder(self.roots)
        slot: dict[Expr, int] = {}
        self.code: list[tuple] = []
        for node in order:
            op, args = node.op, node.args
            k = len(slot)
            slot[node] = k
            if op == "var":
                if args[0] not in col:
                    raise KeyError(f"variable {args[0]!r} has no input column")
                self.code.append(("var", k, col[args[0]]))
            elif op == "const":
                self.code.append(("const", k, frac_interval(args[0]), float(args[0])))
            elif op == "e":
                self.code.append(("const", k, (E_LO, E_HI), math.e))
            elif op in ("sum", "prod", "idx"):
                raise ValueError("instantiate sums, products and indexed variables first")
            elif op == "pow" and args[1].is_const and args[1].value.denominator == 1:
                self.code.append(("powi", k, slot[args[0]], int(args[1].value)))
            else:
                self.code.append((op, k, *[slot[a] for a in args]))
        self.out = [slot[r] for r in self.roots]
        self.size = len(slot)
        self._scalar = None

    # ---------------------------------------------------------- intervals

    def interval(self, lo: np.ndarray, hi: np.ndarray, jobs: int = 1):
        """Enclosures of every root over each box; arrays of shape (B, roots).

        ``jobs`` > 1 evaluates row chunks on a thread pool; the results are
        identical to a serial run because every operation is elementwise.
        """
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if jobs > 1 and len(lo) >= 2 * jobs:
            chunks = np.array_split(np.arange(len(lo)), jobs)
            with ThreadPoolExecutor(jobs) as pool:
                parts = list(pool.map(lambda ix: self._interval(lo[ix], hi[ix]), chunks))
            return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
        return self._interval(lo, hi)

    def _interval(self, lo, hi):
        with np.errstate(all="ignore"):
            return self._run(lo, hi)

    def _run(self, lo, hi):
        B = lo.shape[0]
        L: list = [None] * self.size
        H: list = [None] * self.size
        for ins in self.code:
            op, k = ins[0], ins[1]
            if op == "var":
                L[k], H[k] = lo[:, ins[2]], hi[:, ins[2]]
            elif op == "const":
                L[k], H[k] = np.full(B, ins[2][0]), np.full(B, ins[2][1])
            elif op == "powi":
                L[k], H[k] = iv_powi(L[ins[2]], H[ins[2]], ins[3])
            elif len(ins) == 3:
                L[k], H[k] = _IV[op](L[ins[2]], H[ins[2]])
            else:
                L[k], H[k] = _IV[op](L[ins[2]], H[ins[2]], L[ins[3]], H[ins[3]])
        out_lo = np.stack([L[i] for i in self.out], axis=1)
        out_hi = np.stack([H[i] for i in self.out], axis=1)
        return out_lo, out_hi

    # ------------------------------------------------------------- points

    def point(self, x: np.ndarray) -> np.ndarray:
        """Float evaluation at each row of ``x``; NaN marks domain failures."""
        x = np.asarray(x, dtype=np.float64)
        B = x.shape[0]
        V: list = [None] * self.size
        with np.errstate(all="ignore"):
            for ins in self.code:
                op, k = ins[0], ins[1]
                if op == "var":
                    V[k] = x[:, ins[2]]
                elif op == "const":
                    V[k] = np.full(B, ins[3])
                elif op == "powi":
                    V[k] = np.power(V[ins[2]], float(ins[3]))
                elif len(ins) == 3:
                    V[k] = _POINT[op](V[ins[2]])
                else:
                    V[k] = _POINT[op](V[ins[2]], V[ins[3]])
        return np.stack([V[i] for i in self.out], axis=1)

    def scalar(self):
        """A fast Python callable ``f(*coords) -> tuple`` of float root values."""
        if self._scalar is None:
            lines = [f"def _f({', '.join(f'v{i}' for i in range(len(self.names)))}):"]
            for ins in self.code:
                op, k = ins[0], ins[1]
                if op == "var":
                    rhs = f"v{ins[2]}"
                elif op == "const":
                    rhs = repr(ins[3])
                elif op == "powi":
                    rhs = f"_pow(t{ins[2]}, {float(ins[3])!r})"
                else:
                    rhs = _PY[op].format(*[f"t{a}" for a in ins[2:]])
                lines.append(f"    t{k} = {rhs}")
            lines.append(f"    return ({', '.join(f't{i}' for i in self.out)},)")
            env = {"_div": _py_div, "_exp": _py_exp, "_log": _py_log,
                   "_sqrt": _py_sqrt, "_pow": _py_pow}
            exec("\n".join(lines), env)  # noqa: S102 - generated from our own AST
            self._scalar = env["_f"]
        return self._scalar

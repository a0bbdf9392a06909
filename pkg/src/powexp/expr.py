"""Expression trees for power-exponential formulas.

Nodes are interned: structurally equal trees are the same object, so equality
is identity and hashing is O(1).  Smart constructors do constant folding and
drop neutral elements; nothing beyond that is simplified.
"""

from __future__ import annotations

import weakref
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import mpmath

from powexp.interval import (
    DEFAULT_PREC,
    Interval,
    IntervalDomainError,
    iv_add,
    iv_div,
    iv_exp,
    iv_ln,
    iv_mul,
    iv_neg,
    iv_pow,
    iv_powi,
    iv_sqrt,
    iv_sub,
)

GUARD_BITS = 24

BINARY = ("add", "sub", "mul", "div", "pow")
UNARY = ("neg", "exp", "ln", "sqrt")


class EvalDomainError(ValueError):
    """Point or interval evaluation left the domain of a subterm."""

    def __init__(self, message: str, subterm: "Expr | None" = None):
        self.subterm = subterm
        if subterm is not None:
            message = f"{message} in subterm `{render(subterm)}`"
        super().__init__(message)


class Expr:
    """An interned expression node: ``op`` tag plus a tuple of arguments.

    Leaf payloads: ``var`` carries a name, ``const`` a Fraction, ``idx`` a
    family name and an index expression.  ``sum``/``prod`` carry the bound
    index name, the lower and upper index expressions, and the body.
    """

    __slots__ = ("op", "args", "_hash", "_free", "__weakref__")
    _table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()

    def __new__(cls, op: str, args: tuple):
        key = (op, args)
        node = cls._table.get(key)
        if node is not None:
            return node
        node = super().__new__(cls)
        node.op = op
        node.args = args
        node._hash = hash(key)
        node._free = None
        cls._table[key] = node
        return node

    def __reduce__(self):
        return (Expr, (self.op, self.args))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return f"Expr({render(self)!r})"

    def __str__(self):
        return render(self)

    # arithmetic sugar
    def __add__(self, o):
        return add(self, wrap(o))

    def __radd__(self, o):
        return add(wrap(o), self)

    def __sub__(self, o):
        return sub(self, wrap(o))

    def __rsub__(self, o):
        return sub(wrap(o), self)

    def __mul__(self, o):
        return mul(self, wrap(o))

    def __rmul__(self, o):
        return mul(wrap(o), self)

    def __truediv__(self, o):
        return div(self, wrap(o))

    def __rtruediv__(self, o):
        return div(wrap(o), self)

    def __pow__(self, o):
        return power(self, wrap(o))

    def __rpow__(self, o):
        return power(wrap(o), self)

    def __neg__(self):
        return neg(self)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def value(self) -> Fraction:
        if self.op != "const":
            raise TypeError(f"{self!r} is not a rational constant")
        return self.args[0]

    def free_vars(self) -> frozenset:
        """Names of unbound variables (families appear as ``name[]``)."""
        if self._free is None:
            self._free = _free_vars(self)
        return self._free


def _free_vars(e: Expr) -> frozenset:
    op = e.op
    if op == "var":
        return frozenset([e.args[0]])
    if op in ("const", "e"):
        return frozenset()
    if op == "idx":
        return frozenset([e.args[0] + "[]"]) | e.args[1].free_vars()
    if op in ("sum", "prod"):
        index, lo, hi, body = e.args
        return (body.free_vars() - {index}) | lo.free_vars() | hi.free_vars()
    out = frozenset()
    for a in e.args:
        out |= a.free_vars()
    return out


# ---------------------------------------------------------------- constructors


def var(name: str) -> Expr:
    return Expr("var", (name,))


def const(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, float):
        value = Fraction(value)
    return Expr("const", (Fraction(value),))


E = Expr("e", ())
ZERO = const(0)
ONE = const(1)
TWO = const(2)


def wrap(x) -> Expr:
    return x if isinstance(x, Expr) else const(x)


def _c(e: Expr, v) -> bool:
    return e.op == "const" and e.args[0] == v


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if _c(a, 0):
        return b
    if _c(b, 0):
        return a
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if _c(b, 0):
        return a
    if _c(a, 0):
        return neg(b)
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if _c(a, 0) or _c(b, 0):
        return ZERO
    if _c(a, 1):
        return b
    if _c(b, 1):
        return a
    if _c(a, -1):
        return neg(b)
    if _c(b, -1):
        return neg(a)
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const and b.value == 0:
        raise ZeroDivisionError("division by the constant 0")
    if a.is_const and b.is_const:
        return const(a.value / b.value)
    if _c(a, 0):
        return ZERO
    if _c(b, 1):
        return a
    return Expr("div", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def power(a: Expr, b: Expr) -> Expr:
    if _c(b, 0):
        return ONE
    if _c(b, 1):
        return a
    if _c(a, 1):
        return ONE
    if a.is_const and b.is_const and b.value.denominator == 1:
        n = b.value.numerator
        if not (a.value == 0 and n < 0):
            return const(a.value**n)
    return Expr("pow", (a, b))


def exp(a: Expr) -> Expr:
    if _c(a, 0):
        return ONE
    return Expr("exp", (a,))


def ln(a: Expr) -> Expr:
    if _c(a, 1):
        return ZERO
    if a is E:
        return ONE
    return Expr("ln", (a,))


def sqrt(a: Expr) -> Expr:
    if _c(a, 0) or _c(a, 1):
        return a
    return Expr("sqrt", (a,))


def idx(family: str, index: Expr) -> Expr:
    return Expr("idx", (family, wrap(index)))


def sum_(index: str, lo, hi, body: Expr) -> Expr:
    return Expr("sum", (index, wrap(lo), wrap(hi), body))


def prod_(index: str, lo, hi, body: Expr) -> Expr:
    return Expr("prod", (index, wrap(lo), wrap(hi), body))


def indexed_name(family: str, i: int) -> str:
    return f"{family}_{i}"


_BUILD = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power,
          "neg": neg, "exp": exp, "ln": ln, "sqrt": sqrt}


def rebuild(op: str, args) -> Expr:
    return _BUILD[op](*args)


# ------------------------------------------------------------- traversal utils


def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct subterms of ``roots`` in dependency order (children first)."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node.op in BINARY or node.op in UNARY:
                for a in reversed(node.args):
                    if id(a) not in seen:
                        stack.append((a, False))
    return order


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace free variables by expressions (index names included)."""
    mapping = {k: wrap(v) for k, v in mapping.items()}
    memo: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(node)
        if hit is not None:
            return hit
        op = node.op
        if op == "var":
            out = mapping.get(node.args[0], node)
        elif op in ("const", "e"):
            out = node
        elif op == "idx":
            out = idx(node.args[0], go(node.args[1]))
        elif op in ("sum", "prod"):
            index, lo, hi, body = node.args
            inner = {k: v for k, v in mapping.items() if k != index}
            body = substitute(body, inner) if inner else body
            out = Expr(op, (index, go(lo), go(hi), body))
        else:
            out = rebuild(op, [go(a) for a in node.args])
        memo[node] = out
        return out

    return go(e)


def _index_value(e: Expr) -> int:
    if not e.is_const or e.value.denominator != 1:
        raise ValueError(f"index `{render(e)}` does not reduce to an integer")
    return int(e.value)


def instantiate(e: Expr, ints: Mapping[str, int]) -> Expr:
    """Substitute integer parameters and expand every sum/prod and x[i]."""
    memo: dict[Expr, Expr] = {}

    def go(node: Expr, env: Mapping[str, int]) -> Expr:
        key = node if not env else None
        if key is not None and key in memo:
            return memo[key]
        op = node.op
        if op == "var":
            name = node.args[0]
            out = const(env[name]) if name in env else node
        elif op in ("const", "e"):
            out = node
        elif op == "idx":
            i = _index_value(go(node.args[1], env))
            out = var(indexed_name(node.args[0], i))
        elif op in ("sum", "prod"):
            index, lo, hi, body = node.args
            a, b = _index_value(go(lo, env)), _index_value(go(hi, env))
            terms = [go(body, {**env, index: i}) for i in range(a, b + 1)]
            if not terms:
                out = ZERO if op == "sum" else ONE
            else:
                out = terms[0]
                for t in terms[1:]:
                    out = add(out, t) if op == "sum" else mul(out, t)
        else:
            out = rebuild(op, [go(a, env) for a in node.args])
        if key is not None:
            memo[key] = out
        return out

    return go(e, dict(ints))


# ------------------------------------------------------------- differentiation


def differentiate(e: Expr, name: str) -> Expr:
    """Exact symbolic partial derivative with respect to variable ``name``."""
    memo: dict[Expr, Expr] = {}
    for node in postorder([e]):
        if name not in node.free_vars():
            memo[node] = ZERO
            continue
        op, args = node.op, node.args
        if op == "var":
            d = ONE
        elif op in ("sum", "prod", "idx"):
            raise ValueError("instantiate sums, products and indexed variables first")
        elif op == "add":
            d = add(memo[args[0]], memo[args[1]])
        elif op == "sub":
            d = sub(memo[args[0]], memo[args[1]])
        elif op == "neg":
            d = neg(memo[args[0]])
        elif op == "mul":
            a, b = args
            d = add(mul(memo[a], b), mul(a, memo[b]))
        elif op == "div":
            a, b = args
            d = sub(div(memo[a], b), div(mul(a, memo[b]), power(b, TWO)))
        elif op == "pow":
            a, b = args
            da, db = memo[a], memo[b]
            d = ZERO
            if not _c(db, 0):
                d = mul(mul(node, ln(a)), db)
            if not _c(da, 0):
                d = add(d, mul(mul(b, power(a, sub(b, ONE))), da))
        elif op == "exp":
            d = mul(node, memo[args[0]])
        elif op == "ln":
            d = div(memo[args[0]], args[0])
        elif op == "sqrt":
            d = div(memo[args[0]], mul(TWO, node))
        else:  # pragma: no cover - exhaustive over node types
            raise ValueError(f"unknown node {op}")
        memo[node] = d
    return memo[e]


def gradient(e: Expr, names: Iterable[str]) -> list[Expr]:
    return [differentiate(e, n) for n in names]


def hessian(e: Expr, names: list[str]) -> list[list[Expr]]:
    """Symmetric Hessian; each mixed partial is built once and mirrored."""
    grad = gradient(e, names)
    n = len(names)
    out: list[list[Expr | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            out[i][j] = out[j][i] = differentiate(grad[i], names[j])
    return out  # type: ignore[return-value]


# ------------------------------------------------------------------- rendering

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _const_text(v: Fraction) -> tuple[str, int]:
    if v.denominator == 1:
        s = str(v.numerator)
    else:
        s = f"{v.numerator}/{v.denominator}"
    if v < 0 or v.denominator != 1:
        return f"({s})", 5
    return s, 5


def render(e: Expr) -> str:
    """DSL text for ``e``; ``parse_expr(render(e))`` rebuilds the same node."""
    return _render(e)[0]


def _render(e: Expr) -> tuple[str, int]:
    op, args = e.op, e.args
    if op == "var":
        return args[0], 5
    if op == "const":
        return _const_text(args[0])
    if op == "e":
        return "e", 5
    if op == "idx":
        return f"{args[0]}[{render(args[1])}]", 5
    if op in ("sum", "prod"):
        index, lo, hi, body = args
        return f"{op}({index}={render(lo)}..{render(hi)}, {render(body)})", 5
    if op in ("exp", "ln", "sqrt"):
        return f"{op}({render(args[0])})", 5
    if op == "neg":
        s, p = _render(args[0])
        if p < 4:
            s = f"({s})"
        return f"-{s}", 3
    if op == "pow":
        (ls, lp), (rs, rp) = _render(args[0]), _render(args[1])
        if lp <= 4:
            ls = f"({ls})"
        if rp < 4:
            rs = f"({rs})"
        return f"{ls}^{rs}", 4
    level = _PREC[op]
    (ls, lp), (rs, rp) = _render(args[0]), _render(args[1])
    if lp < level:
        ls = f"({ls})"
    if rp < level or (rp == level and op in ("sub", "div", "mul", "add")):
        rs = f"({rs})"
    return f"{ls} {_SYM[op]} {rs}", level


# ------------------------------------------------------------ point evaluation


def _pt_pow(x, y, node):
    if x == 0:
        if y == 0:
            return mpmath.mpf(1)
        if y > 0:
            return mpmath.mpf(0)
        raise EvalDomainError("0 raised to a negative power", node)
    if x < 0:
        if y == int(y):
            return x ** int(y)
        raise EvalDomainError("negative base with non-integer exponent", node)
    if y == int(y) and abs(y) < 2**31:
        return x ** int(y)
    return mpmath.exp(y * mpmath.log(x))


def eval_point(e: Expr, assignment: Mapping[str, object], precision: int = DEFAULT_PREC):
    """Evaluate at a point with ``precision`` bits (guard bits added internally)."""
    with mpmath.workprec(precision + GUARD_BITS):
        env = {k: _to_mpf(v) for k, v in assignment.items()}
        val = _eval_point_tree(e, env)
    with mpmath.workprec(precision):
        return +val


def _to_mpf(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    if isinstance(v, Expr):
        return _eval_point_tree(v, {})
    return mpmath.mpf(v)


def _eval_point_tree(e: Expr, env):
    memo: dict[Expr, object] = {}
    for node in postorder([e]):
        op, args = node.op, node.args
        if op == "var":
            try:
                v = env[args[0]]
            except KeyError:
                raise EvalDomainError(f"unassigned variable {args[0]!r}", node) from None
        elif op == "const":
            v = mpmath.mpf(args[0].numerator) / args[0].denominator
        elif op == "e":
            v = mpmath.e + 0
        elif op in ("sum", "prod", "idx"):
            raise EvalDomainError("uninstantiated sum/prod/index", node)
        else:
            a = [memo[x] for x in args]
            if op == "add":
                v = a[0] + a[1]
            elif op == "sub":
                v = a[0] - a[1]
            elif op == "mul":
                v = a[0] * a[1]
            elif op == "div":
                if a[1] == 0:
                    raise EvalDomainError("division by zero", node)
                v = a[0] / a[1]
            elif op == "neg":
                v = -a[0]
            elif op == "pow":
                v = _pt_pow(a[0], a[1], node)
            elif op == "exp":
                v = mpmath.exp(a[0])
            elif op == "ln":
                if a[0] <= 0:
                    raise EvalDomainError("ln of a nonpositive value", node)
                v = mpmath.log(a[0])
            elif op == "sqrt":
                if a[0] < 0:
                    raise EvalDomainError("sqrt of a negative value", node)
                v = mpmath.sqrt(a[0])
            else:  # pragma: no cover
                raise ValueError(op)
        memo[node] = v
    return memo[e]


# --------------------------------------------------------- interval evaluation


def eval_interval(e: Expr, box: Mapping[str, Interval], precision: int | None = None) -> Interval:
    """Rigorous enclosure of ``e`` over ``box`` (names mapped to intervals)."""
    if precision is None:
        precision = max((iv.prec for iv in box.values()), default=DEFAULT_PREC)
    memo: dict[Expr, Interval] = {}
    for node in postorder([e]):
        op, args = node.op, node.args
        try:
            if op == "var":
                try:
                    v = box[args[0]]
                except KeyError:
                    raise EvalDomainError(f"box does not cover {args[0]!r}", node) from None
            elif op == "const":
                v = Interval(args[0], args[0], prec=precision)
            elif op == "e":
                v = Interval.e(precision)
            elif op in ("sum", "prod", "idx"):
                raise EvalDomainError("uninstantiated sum/prod/index", node)
            elif op == "pow" and args[1].is_const and args[1].value.denominator == 1:
                v = iv_powi(memo[args[0]], int(args[1].value))
            else:
                a = [memo[x] for x in args]
                v = _IV_OPS[op](*a)
        except IntervalDomainError as exc:
            raise EvalDomainError(str(exc), node) from exc
        memo[node] = v
    return memo[e]


_IV_OPS: dict[str, Callable] = {
    "add": iv_add,
    "sub": iv_sub,
    "mul": iv_mul,
    "div": iv_div,
    "pow": iv_pow,
    "neg": iv_neg,
    "exp": iv_exp,
    "ln": iv_ln,
    "sqrt": iv_sqrt,
}


def count_nodes(e: Expr) -> int:
    return len(postorder([e]))

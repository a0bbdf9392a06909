"""Quantified inequality statements over boxes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

import mpmath

from powexp import expr as ex
from powexp.expr import Expr

NONNEG = "nonneg"
NONPOS = "nonpos"

# binder names treated as family parameters rather than box variables
PARAM_NAMES = frozenset({"r", "k", "n"})

DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class Binder:
    """A quantified name with its domain.

    ``family`` holds the (lo, hi) index expressions for ``x[1..n]`` binders.
    ``integer`` marks ``{lo..hi}`` domains.  Open endpoints are flags only.
    """

    name: str
    lo: Expr
    hi: Expr
    lo_open: bool = False
    hi_open: bool = False
    family: tuple[Expr, Expr] | None = None
    integer: bool = False

    def bounds(self) -> tuple[mpmath.mpf, mpmath.mpf]:
        return ex.eval_point(self.lo, {}, 128), ex.eval_point(self.hi, {}, 128)

    def render(self) -> str:
        head = self.name
        if self.family is not None:
            head = f"{self.name}[{ex.render(self.family[0])}..{ex.render(self.family[1])}]"
        if self.integer:
            return f"{head} in {{{ex.render(self.lo)}..{ex.render(self.hi)}}}"
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{head} in {left}{ex.render(self.lo)}, {ex.render(self.hi)}{right}"


@dataclass(frozen=True)
class Statement:
    id: str
    lhs: Expr
    rhs: Expr
    sense: str
    vars: tuple[Binder, ...]
    params: tuple[Binder, ...] = ()
    constraints: tuple[tuple[str, Expr], ...] = ()
    notes: str = field(default="", compare=False)

    @property
    def gap(self) -> Expr:
        """LHS minus RHS, with constraint substitutions applied."""
        g = self.lhs if ex._c(self.rhs, 0) else ex.sub(self.lhs, self.rhs)
        for name, value in reversed(self.constraints):
            g = ex.substitute(g, {name: value})
        return g

    @property
    def target(self) -> Expr:
        """Expression that must be nonnegative for the statement to hold."""
        return self.gap if self.sense == NONNEG else ex.neg(self.gap)

    @property
    def integer_params(self) -> list[Binder]:
        return [p for p in self.params if p.integer]

    def render(self) -> str:
        binders = ", ".join(b.render() for b in (*self.vars, *self.params))
        text = f"stmt {self.id}: forall {binders}"
        if self.constraints:
            text += " with " + ", ".join(f"{n} = {ex.render(v)}" for n, v in self.constraints)
        rel = ">=" if self.sense == NONNEG else "<="
        return f"{text}: {ex.render(self.lhs)} {rel} {ex.render(self.rhs)}"

    def instantiate(self, **values) -> "Statement":
        """Pin parameters; integer parameters also expand families and sums.

        ``values`` maps parameter names to numbers (int, Fraction, str, float)
        or to ``"e"``; pinned parameters are substituted exactly.
        """
        ints = {}
        reals = {}
        for name, v in values.items():
            if v is None:
                continue
            p = next((q for q in self.params if q.name == name), None)
            if p is None:
                raise KeyError(f"{self.id} has no parameter {name!r}")
            if p.integer:
                ints[name] = int(v)
            else:
                reals[name] = _pin_value(v)
        for p in self.params:
            if p.integer and p.name in ints:
                lo, hi = (int(x) for x in p.bounds())
                if not lo <= ints[p.name] <= hi:
                    raise ValueError(f"{p.name}={ints[p.name]} outside {{{lo}..{hi}}}")
        mapping: dict[str, Expr] = {**{k: ex.const(v) for k, v in ints.items()}, **reals}

        def sub_all(e: Expr) -> Expr:
            e = ex.substitute(e, mapping) if mapping else e
            return ex.instantiate(e, ints) if ints else e

        new_vars: list[Binder] = []
        for b in self.vars:
            lo, hi = sub_all(b.lo), sub_all(b.hi)
            if b.family is not None and ints:
                a = int(ex.instantiate(ex.substitute(b.family[0], mapping), ints).value)
                z = int(ex.instantiate(ex.substitute(b.family[1], mapping), ints).value)
                for i in range(a, z + 1):
                    new_vars.append(Binder(ex.indexed_name(b.name, i), lo, hi, b.lo_open, b.hi_open))
            else:
                new_vars.append(replace(b, lo=lo, hi=hi))
        new_params = tuple(p for p in self.params if p.name not in ints and p.name not in reals)
        return replace(
            self,
            lhs=sub_all(self.lhs),
            rhs=sub_all(self.rhs),
            vars=tuple(new_vars),
            params=new_params,
            constraints=tuple((n, sub_all(v)) for n, v in self.constraints),
        )

    @property
    def is_concrete(self) -> bool:
        return not self.integer_params and all(b.family is None for b in self.vars)

    def dims(self) -> list[Binder]:
        """Box dimensions: variables then unpinned real parameters."""
        if not self.is_concrete:
            raise ValueError(f"{self.id}: pin integer parameters before building a box")
        return [*self.vars, *self.params]

    def box(self, delta: float = DEFAULT_DELTA) -> dict[str, tuple[mpmath.mpf, mpmath.mpf]]:
        """Closed domain with open endpoints shrunk by ``delta``."""
        out = {}
        for b in self.dims():
            lo, hi = b.bounds()
            if b.lo_open:
                lo = lo + delta
            if b.hi_open:
                hi = hi - delta
            if lo > hi:
                raise ValueError(f"{self.id}: domain of {b.name} empty after shrinking")
            out[b.name] = (lo, hi)
        return out


def _pin_value(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, str):
        v = v.strip()
        if v == "e":
            return ex.E
        return ex.const(Fraction(v))
    return ex.const(v)

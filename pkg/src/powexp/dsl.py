"""Parser for the statement DSL.

Grammar (EBNF)::

    statement  = "stmt" IDENT ":" "forall" binders [ "with" constraints ] ":"
                 expr ( ">=" | "<=" ) expr ;
    binders    = binder { "," binder } ;
    binder     = name { "," name } "in" domain ;
    name       = IDENT [ "[" expr ".." expr "]" ] ;
    domain     = ( "[" | "(" ) expr "," expr ( "]" | ")" )
               | "{" expr ".." expr "}" ;
    constraints= IDENT "=" expr { "," IDENT "=" expr } ;
    expr       = term { ( "+" | "-" ) term } ;
    term       = unary { ( "*" | "/" ) unary } ;
    unary      = "-" unary | power ;
    power      = atom [ "^" unary ] ;
    atom       = NUMBER | "e" | IDENT [ "[" expr "]" ] | "(" expr ")"
               | ( "exp" | "ln" | "sqrt" ) "(" expr ")"
               | ( "sum" | "prod" ) "(" IDENT "=" expr ".." expr "," expr ")" ;

Binders named ``r``, ``k`` or ``n``, and any ``{lo..hi}`` domain, are
parameters; all other binders are box variables.  ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from powexp import expr as ex
from powexp.expr import Expr
from powexp.statement import NONNEG, NONPOS, PARAM_NAMES, Binder, Statement

KEYWORDS = {"stmt", "forall", "in", "with"}
FUNCTIONS = {"exp": ex.exp, "ln": ex.ln, "sqrt": ex.sqrt}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\.\.|>=|<=|[-+*/^()\[\]{},:=])
    """,
    re.VERBOSE,
)


class DSLError(SyntaxError):
    """Syntax, binding or domain error with a line:column location."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"{line}:{col}: {message}")


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind != "ws":
            tok = m.group()
            if kind == "ident" and tok in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, tok, line, m.start() - start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - start + 1))
    return out


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Token | None = None) -> DSLError:
        tok = tok or self.tok
        return DSLError(message, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def take(self, text: str | None = None, kind: str | None = None) -> Token:
        tok = self.tok
        if text is not None and not (tok.text == text and tok.kind in ("op", "kw")):
            got = tok.text or "end of input"
            raise self.error(f"expected {text!r}, got {got!r}")
        if kind is not None and tok.kind != kind:
            got = tok.text or "end of input"
            raise self.error(f"expected {kind}, got {got!r}")
        self.i += 1
        return tok

    # -------------------------------------------------------------- statements

    def statement(self) -> Statement:
        self.take("stmt")
        sid = self.take(kind="ident").text
        self.take(":")
        self.take("forall")
        binders = self.binders()
        constraints: list[tuple[str, Expr]] = []
        if self.at("with"):
            self.take("with")
            while True:
                name = self.take(kind="ident").text
                self.take("=")
                constraints.append((name, self.expr()))
                if not self.at(","):
                    break
                self.take(",")
        self.take(":")
        lhs = self.expr()
        if self.at(">="):
            sense = NONNEG
        elif self.at("<="):
            sense = NONPOS
        else:
            raise self.error("expected '>=' or '<='")
        self.take()
        rhs = self.expr()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected trailing input {self.tok.text!r}")
        vars_ = tuple(b for b in binders if not _is_param(b))
        params = tuple(b for b in binders if _is_param(b))
        stmt = Statement(sid, lhs, rhs, sense, vars_, params, tuple(constraints))
        _check_bindings(stmt, self._locate)
        return stmt

    def _locate(self, name: str) -> Token:
        for tok in self.toks:
            if tok.kind == "ident" and tok.text == name:
                return tok
        return self.toks[0]

    def binders(self) -> list[Binder]:
        out: list[Binder] = []
        while True:
            names = [self.binder_name()]
            while self.at(","):
                self.take(",")
                names.append(self.binder_name())
            self.take("in")
            dom_tok = self.tok
            lo, hi, lo_open, hi_open, integer = self.domain()
            for name, family in names:
                out.append(Binder(name, lo, hi, lo_open, hi_open, family, integer))
            _check_domain(lo, hi, lo_open, hi_open, dom_tok)
            if not self.at(","):
                return out
            self.take(",")

    def binder_name(self):
        name = self.take(kind="ident").text
        family = None
        if self.at("["):
            self.take("[")
            a = self.expr()
            self.take("..")
            b = self.expr()
            self.take("]")
            family = (a, b)
        return name, family

    def domain(self):
        if self.at("{"):
            self.take("{")
            lo = self.expr()
            self.take("..")
            hi = self.expr()
            self.take("}")
            return lo, hi, False, False, True
        if self.at("[") or self.at("("):
            lo_open = self.take().text == "("
            lo = self.expr()
            self.take(",")
            hi = self.expr()
            if not (self.at("]") or self.at(")")):
                raise self.error("expected ']' or ')' closing the domain")
            hi_open = self.take().text == ")"
            return lo, hi, lo_open, hi_open, False
        raise self.error("expected a domain: [lo,hi], (lo,hi], [lo,hi) or {lo..hi}")

    # ------------------------------------------------------------- expressions

    def expr(self) -> Expr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.take().text
            rhs = self.term()
            e = ex.add(e, rhs) if op == "+" else ex.sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.at("*") or self.at("/"):
            tok = self.take()
            rhs = self.unary()
            if tok.text == "*":
                e = ex.mul(e, rhs)
            else:
                if rhs.is_const and rhs.value == 0:
                    raise self.error("division by the constant 0", tok)
                e = ex.div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.at("-"):
            self.take()
            return ex.neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            self.take()
            return ex.power(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return ex.const(Fraction(tok.text))
        if self.at("("):
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if tok.kind != "ident":
            raise self.error(f"unexpected {tok.text or 'end of input'!r} in expression")
        self.take()
        name = tok.text
        if name in FUNCTIONS and self.at("("):
            self.take("(")
            arg = self.expr()
            self.take(")")
            return FUNCTIONS[name](arg)
        if name in ("sum", "prod") and self.at("("):
            self.take("(")
            index = self.take(kind="ident").text
            self.take("=")
            lo = self.expr()
            self.take("..")
            hi = self.expr()
            self.take(",")
            body = self.expr()
            self.take(")")
            build = ex.sum_ if name == "sum" else ex.prod_
            return build(index, lo, hi, body)
        if name == "e":
            return ex.E
        if self.at("["):
            self.take("[")
            index = self.expr()
            self.take("]")
            return ex.idx(name, index)
        return ex.var(name)


def _is_param(b: Binder) -> bool:
    return b.integer or (b.name in PARAM_NAMES and b.family is None)


def _check_domain(lo, hi, lo_open, hi_open, tok: Token) -> None:
    for end in (lo, hi):
        if end.free_vars():
            raise DSLError("malformed domain: endpoints must be constants", tok.line, tok.col)
    a = ex.eval_point(lo, {}, 64)
    b = ex.eval_point(hi, {}, 64)
    if a > b or (a == b and (lo_open or hi_open)):
        raise DSLError(f"malformed domain: empty range {ex.render(lo)}..{ex.render(hi)}",
                       tok.line, tok.col)


def _check_bindings(stmt: Statement, locate) -> None:
    scalars = {b.name for b in (*stmt.vars, *stmt.params) if b.family is None}
    families = {b.name + "[]" for b in stmt.vars if b.family is not None}
    ints = {b.name for b in stmt.params if b.integer}
    bound = set(scalars) | families
    for b in stmt.vars:
        if b.family is not None:
            for e in b.family:
                loose = e.free_vars() - ints
                if loose:
                    _unbound(sorted(loose)[0], locate, "unbound index variable")
    for name, value in stmt.constraints:
        loose = value.free_vars() - bound
        if loose:
            _unbound(sorted(loose)[0], locate)
        bound.add(name)
    for side in (stmt.lhs, stmt.rhs):
        loose = side.free_vars() - bound
        if loose:
            _unbound(sorted(loose)[0], locate)


def _unbound(name: str, locate, what: str = "unbound variable"):
    tok = locate(name.rstrip("[]"))
    raise DSLError(f"{what} {name.rstrip('[]')!r}", tok.line, tok.col)


def parse(text: str) -> Statement:
    """Parse one statement; raises :class:`DSLError` with line:column."""
    return Parser(text).statement()


def parse_expr(text: str) -> Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected trailing input {p.tok.text!r}")
    return e

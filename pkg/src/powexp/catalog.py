"""Registry of named statements and claims.

Each entry is a ``<ID>.stmt`` file holding one DSL statement, plus a record
in ``anchors.json`` (kind, anchor text, expected status, default ``n``).
The directory defaults to the packaged ``statements/`` folder and can be
replaced with the ``POWEXP_STATEMENTS_DIR`` environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from powexp import expr as ex
from powexp.dsl import parse
from powexp.statement import Binder, Statement

ENV_DIR = "POWEXP_STATEMENTS_DIR"

KINDS = ("theorem", "conjecture-proved-elsewhere", "open-conjecture", "proof-claim",
         "auxiliary-inequality")
EXPECTED = ("proved-in-paper", "open", "external", "check", "refutation-expected")


class UnknownStatement(KeyError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    kind: str
    dsl: str
    anchor: str
    expected: str
    n: int | None = None
    alias_of: str | None = None
    notes: str = ""

    @property
    def is_claim(self) -> bool:
        return self.kind == "proof-claim"

    def statement(self) -> Statement:
        return parse(self.dsl)


def statements_dir() -> Path:
    override = os.environ.get(ENV_DIR)
    if override:
        return Path(override)
    return Path(__file__).with_name("statements")


@lru_cache(maxsize=8)
def _load(directory: str) -> dict[str, CatalogEntry]:
    root = Path(directory)
    meta_path = root / "anchors.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no anchors.json in {root}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    entries = {}
    for sid, info in meta.items():
        src = root / f"{sid}.stmt"
        if not src.is_file():
            raise FileNotFoundError(f"catalog entry {sid} has no {src.name}")
        kind, expected = info["kind"], info["expected"]
        if kind not in KINDS:
            raise ValueError(f"{sid}: unknown kind {kind!r}")
        if expected not in EXPECTED:
            raise ValueError(f"{sid}: unknown expected status {expected!r}")
        entries[sid] = CatalogEntry(sid, kind, src.read_text(encoding="utf-8").strip(),
                                    info["anchor"], expected, info.get("n"),
                                    info.get("alias_of"), info.get("notes", ""))
    return entries


def load(directory: str | Path | None = None) -> dict[str, CatalogEntry]:
    return _load(str(directory or statements_dir()))


def entry(sid: str) -> CatalogEntry:
    entries = load()
    if sid not in entries:
        raise UnknownStatement(f"unknown statement id {sid!r}")
    return entries[sid]


def list_statements() -> list[tuple[str, str, str]]:
    """(id, kind, anchor) for every entry, ordered by id."""
    return [(e.id, e.kind, e.anchor) for e in sorted(load().values(), key=lambda e: e.id)]


def parse_range(text: str) -> tuple[str, str]:
    """``"lo:hi"`` to a pair of endpoint strings (``e`` allowed)."""
    parts = text.split(":")
    if len(parts) != 2 or not all(p.strip() for p in parts):
        raise ValueError(f"expected lo:hi, got {text!r}")
    return parts[0].strip(), parts[1].strip()


def _narrow(stmt: Statement, name: str, lo: str, hi: str) -> Statement:
    """Replace the domain of parameter ``name`` with the closed [lo, hi]."""
    from powexp.dsl import parse_expr

    lo_e, hi_e = parse_expr(lo), parse_expr(hi)
    a, b = ex.eval_point(lo_e, {}, 128), ex.eval_point(hi_e, {}, 128)
    params = []
    found = False
    for p in stmt.params:
        if p.name == name:
            found = True
            plo, phi = p.bounds()
            if a < plo or b > phi or a > b:
                raise ValueError(f"{name} range {lo}:{hi} is outside the domain of {stmt.id}")
            p = Binder(name, lo_e, hi_e, a == plo and p.lo_open, b == phi and p.hi_open)
        params.append(p)
    if not found:
        raise KeyError(f"{stmt.id} has no parameter {name!r}")
    return replace(stmt, params=tuple(params))


def get(sid: str, n: int | None = None, r=None, k=None) -> Statement:
    """The parsed statement of ``sid`` with parameters pinned.

    ``n`` defaults to the entry's own ``n``.  ``r`` and ``k`` may be a number,
    ``"e"`` or a ``"lo:hi"`` range, which narrows the parameter's domain
    instead of pinning it.
    """
    e = entry(sid)
    stmt = e.statement()
    pins = {}
    names = {p.name for p in stmt.params}
    if "n" in names:
        pins["n"] = n if n is not None else e.n
        if pins["n"] is None:
            raise ValueError(f"{sid} needs n")
    elif n is not None:
        raise ValueError(f"{sid} has no parameter n")
    for name, value in (("r", r), ("k", k)):
        if value is None:
            continue
        if name not in names:
            raise ValueError(f"{sid} has no parameter {name}")
        if isinstance(value, str) and ":" in value:
            stmt = _narrow(stmt, name, *parse_range(value))
        else:
            _check_pin(stmt, name, value)
            pins[name] = value
    return stmt.instantiate(**pins) if pins else stmt


def _check_pin(stmt: Statement, name: str, value) -> None:
    from powexp.statement import _pin_value

    p = next(q for q in stmt.params if q.name == name)
    v = ex.eval_point(_pin_value(value), {}, 128)
    lo, hi = p.bounds()
    below = v < lo or (p.lo_open and v == lo)
    above = v > hi or (p.hi_open and v == hi)
    if below or above:
        raise ValueError(f"{name}={value} is outside the domain of {stmt.id}: {p.render()}")

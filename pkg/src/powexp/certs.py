"""Result objects (certificates, refutations) and canonical JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import mpmath

from powexp import expr as ex
from powexp.interval import Interval

FLOAT_TAG = "binary64"


def canonical_json(obj: Any) -> str:
    """Sorted keys, no insignificant whitespace, UTF-8 text."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fstr(x: float) -> str:
    """Shortest decimal string that round-trips to the same binary64 value."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def mpstr(x, prec: int) -> str:
    digits = int(prec * 0.30103) + 2
    return mpmath.nstr(x, digits, min_fixed=-4, max_fixed=6, strip_zeros=False)


@dataclass
class BoxRecord:
    path: str
    lo: tuple
    hi: tuple
    bound: float
    method: str

    def to_dict(self) -> dict:
        return {"path": self.path, "lo": [fstr(v) for v in self.lo],
                "hi": [fstr(v) for v in self.hi], "bound": fstr(self.bound),
                "method": self.method}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxRecord":
        return cls(d["path"], tuple(float(v) for v in d["lo"]), tuple(float(v) for v in d["hi"]),
                   float(d["bound"]), d["method"])


@dataclass
class Certificate:
    statement_id: str
    eps: float
    names: list
    domain_lo: tuple
    domain_hi: tuple
    boxes: list
    max_depth: int
    total_boxes: int
    precision: int
    target: str
    groups: list = field(default_factory=list)
    delta_eq: float = 0.0
    strict_outside_tube: bool = True
    faces: list = field(default_factory=list)
    delta: float = 0.0
    wall_time: float = 0.0

    kind = "certificate"

    @property
    def min_bound(self) -> float:
        return min((b.bound for b in self.boxes), default=math.inf)

    def to_dict(self) -> dict:
        """Canonical content; wall time is kept out so reruns hash equal."""
        return {
            "kind": self.kind,
            "statement": self.statement_id,
            "eps": fstr(self.eps),
            "names": list(self.names),
            "domain": {"lo": [fstr(v) for v in self.domain_lo],
                       "hi": [fstr(v) for v in self.domain_hi]},
            "boxes": [b.to_dict() for b in sorted(self.boxes, key=lambda b: b.path)],
            "max_depth": self.max_depth,
            "total_boxes": self.total_boxes,
            "precision": {"bound_arithmetic": FLOAT_TAG, "bits": self.precision},
            "target": self.target,
            "groups": [list(g) for g in self.groups],
            "delta_eq": fstr(self.delta_eq),
            "strict_outside_tube": self.strict_outside_tube,
            "faces": self.faces,
            "delta": fstr(self.delta),
            "min_bound": fstr(self.min_bound),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            statement_id=d["statement"],
            eps=float(d["eps"]),
            names=list(d["names"]),
            domain_lo=tuple(float(v) for v in d["domain"]["lo"]),
            domain_hi=tuple(float(v) for v in d["domain"]["hi"]),
            boxes=[BoxRecord.from_dict(b) for b in d["boxes"]],
            max_depth=int(d["max_depth"]),
            total_boxes=int(d["total_boxes"]),
            precision=int(d["precision"]["bits"]),
            target=d["target"],
            groups=[list(g) for g in d.get("groups", [])],
            delta_eq=float(d.get("delta_eq", "0")),
            strict_outside_tube=bool(d.get("strict_outside_tube", True)),
            faces=list(d.get("faces", [])),
            delta=float(d.get("delta", "0")),
        )


@dataclass
class Refutation:
    statement_id: str
    witness: dict
    value: Any  # target value (mpf) at ``precision`` bits; negative
    precision: int
    target: str
    upper: Any = None  # rigorous upper bound of the target at the witness

    kind = "refutation"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statement": self.statement_id,
            "witness": {k: self.witness[k] for k in sorted(self.witness)},
            "value": mpstr(self.value, self.precision),
            "upper": mpstr(self.upper, self.precision) if self.upper is not None else None,
            "precision": {"bits": self.precision, "witness": FLOAT_TAG},
            "target": self.target,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Refutation":
        prec = int(d["precision"]["bits"])
        with mpmath.workprec(prec):
            value = mpmath.mpf(d["value"])
            upper = mpmath.mpf(d["upper"]) if d.get("upper") is not None else None
        return cls(d["statement"], dict(d["witness"]), value, prec, d["target"], upper)


@dataclass
class Inconclusive:
    statement_id: str
    reason: str
    worst_box: dict
    worst_bound: float
    total_boxes: int
    max_depth: int
    wall_time: float = 0.0

    kind = "inconclusive"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statement": self.statement_id,
            "reason": self.reason,
            "worst_box": {k: [fstr(a), fstr(b)] for k, (a, b) in sorted(self.worst_box.items())},
            "worst_bound": fstr(self.worst_bound),
            "total_boxes": self.total_boxes,
            "max_depth": self.max_depth,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


@dataclass
class NotFound:
    statement_id: str
    best_point: dict
    best_value: float
    starts: int

    kind = "not_found"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statement": self.statement_id,
            "best_point": {k: self.best_point[k] for k in sorted(self.best_point)},
            "best_value": fstr(self.best_value),
            "starts": self.starts,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def result_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "certificate":
        return Certificate.from_dict(d)
    if kind == "refutation":
        return Refutation.from_dict(d)
    raise ValueError(f"cannot load a result of kind {kind!r}")


def verify_witness(target: ex.Expr, witness: dict, precision: int):
    """Rigorously evaluate ``target`` at an exact witness point.

    Returns ``(value, upper)`` where ``upper`` is an outward-rounded upper
    bound at ``precision`` bits.  The witness is a violation when
    ``upper < -10 * 2**-precision``.
    """
    point = {k: float(v) for k, v in witness.items()}
    box = {k: Interval(v, v, prec=precision) for k, v in point.items()}
    enclosure = ex.eval_interval(target, box, precision)
    value = ex.eval_point(target, point, precision)
    return value, enclosure.hi


def witness_margin(precision: int):
    with mpmath.workprec(precision):
        return -10 * mpmath.ldexp(1, -precision)


def is_violation(upper, precision: int) -> bool:
    return upper < witness_margin(precision)


def make_refutation(stmt_id: str, target: ex.Expr, point: dict, precision: int) -> Refutation | None:
    """Build a refutation at ``precision`` bits if the point verifies."""
    witness = {k: fstr(float(v)) for k, v in point.items()}
    try:
        value, upper = verify_witness(target, witness, precision)
    except ex.EvalDomainError:
        return None
    if not is_violation(upper, precision):
        return None
    return Refutation(stmt_id, witness, value, precision, ex.render(target), upper)


def replay_refutation(ref: Refutation, target: ex.Expr, precision: int | None = None) -> bool:
    """Re-verify a refutation witness; defaults to twice its stated precision."""
    precision = precision or 2 * ref.precision
    try:
        _, upper = verify_witness(target, ref.witness, precision)
    except ex.EvalDomainError:
        return False
    return bool(is_violation(upper, precision))

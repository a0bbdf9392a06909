"""Checks of the auxiliary analytic claims used in the proofs.

Each claim is broken into parts.  A part is either an inequality over a box
(sent to the prover, optionally with a strictness margin) or an identity
checked at random points in high precision.  A claim holds when every part
holds, fails as soon as one part has a verified counterexample, and is
inconclusive otherwise.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable

import mpmath

from powexp import expr as ex
from powexp.certs import Certificate, Refutation, canonical_json, fstr
from powexp.dsl import parse, parse_expr
from powexp.prover import ProverConfig, certify
from powexp.statement import NONNEG, Statement

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"

# strict inequalities are certified as gap >= STRICT_MARGIN - eps
STRICT_MARGIN = 1e-12
CLAIM_EPS = 1e-13


@dataclass
class ClaimReport:
    claim_id: str
    status: str
    evidence: list = field(default_factory=list)
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"claim": self.claim_id, "status": self.status, "witness": self.witness,
                "evidence": self.evidence}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


@dataclass
class Part:
    label: str
    run: Callable[["Budget"], dict]


@dataclass(frozen=True)
class Budget:
    max_boxes: int = 400_000
    time_limit: float | None = 120.0
    precision: int = 96
    jobs: int = 1
    samples: int = 200
    seed: int = 0


# ------------------------------------------------------------------- parts


def _shifted(stmt: Statement, margin: float) -> Statement:
    m = ex.const(margin)
    lhs = ex.sub(stmt.lhs, m) if stmt.sense == NONNEG else ex.add(stmt.lhs, m)
    return replace(stmt, lhs=lhs)


def inequality(label: str, dsl: str, strict: bool = True, **pins) -> Part:
    """Part certified by the prover; ``strict`` asks for gap >= margin."""

    def run(budget: Budget) -> dict:
        stmt = parse(dsl)
        if pins:
            stmt = stmt.instantiate(**pins)
        target_stmt = _shifted(stmt, STRICT_MARGIN) if strict else stmt
        cfg = ProverConfig(eps=CLAIM_EPS, max_boxes=budget.max_boxes, precision=budget.precision,
                           jobs=budget.jobs, time_limit=budget.time_limit, faces=False)
        res = certify(target_stmt, cfg)
        out = {"part": label, "check": "certify", "statement": stmt.render(),
               "strict": strict, "result": res.kind}
        if isinstance(res, Certificate):
            out.update(status=HOLDS, boxes=res.total_boxes, min_bound=fstr(res.min_bound))
        elif isinstance(res, Refutation):
            out.update(status=FAILS, witness=res.witness, value=res.to_dict()["value"])
            if strict:
                # the shifted gap is negative; only a negative original gap
                # (or zero, for a strict claim) is a counterexample
                from powexp.certs import verify_witness
                value, upper = verify_witness(stmt.target, res.witness, 2 * budget.precision)
                out["value"] = mpmath.nstr(value, 20)
                if upper > 0 and value > STRICT_MARGIN:
                    out["status"] = INCONCLUSIVE
        else:
            out.update(status=INCONCLUSIVE, reason=res.reason, worst_bound=fstr(res.worst_bound))
        return out

    return Part(label, run)


def identity(label: str, lhs: str, rhs: str, sampler: Callable[[random.Random], dict],
             tol: float = 1e-25) -> Part:
    """Part checked as |lhs - rhs| <= tol * max(1, |rhs|) at random points."""

    def run(budget: Budget) -> dict:
        a, b = parse_expr(lhs), parse_expr(rhs)
        rng = random.Random(budget.seed)
        worst, where = mpmath.mpf(0), None
        for _ in range(budget.samples):
            point = sampler(rng)
            try:
                va = ex.eval_point(a, point, budget.precision)
                vb = ex.eval_point(b, point, budget.precision)
            except ex.EvalDomainError:
                continue
            err = abs(va - vb) / max(1, abs(vb))
            if err > worst:
                worst, where = err, point
        ok = worst <= tol
        out = {"part": label, "check": "identity", "lhs": lhs, "rhs": rhs,
               "samples": budget.samples, "max_rel_error": mpmath.nstr(worst, 6),
               "status": HOLDS if ok else FAILS}
        if not ok:
            out["witness"] = {k: fstr(v) for k, v in where.items()}
        return out

    return Part(label, run)


def point_sign(label: str, expr_text: str, point: dict, sign: int) -> Part:
    """Part asserting the sign of an expression at one exact point."""

    def run(budget: Budget) -> dict:
        from powexp.interval import Interval

        e = parse_expr(expr_text)
        box = {k: Interval(v, prec=budget.precision) for k, v in point.items()}
        enc = ex.eval_interval(e, box, budget.precision)
        certain = enc.lo > 0 if sign > 0 else enc.hi < 0
        wrong = enc.hi < 0 if sign > 0 else enc.lo > 0
        status = HOLDS if certain else (FAILS if wrong else INCONCLUSIVE)
        return {"part": label, "check": "point", "expr": expr_text,
                "point": {k: str(v) for k, v in point.items()},
                "enclosure": [mpmath.nstr(enc.lo, 12), mpmath.nstr(enc.hi, 12)],
                "status": status}

    return Part(label, run)


def _unit(rng: random.Random, lo: float = 1e-3, hi: float = 1.0) -> float:
    return lo + (hi - lo) * rng.random()


# ------------------------------------------------------------------ claims

G_OF_S = "exp(-ln(s)/(s-1))"
M_OF_Z = "z*c^(r*z) - c^(r*c+1)"
Q_OF_Z = "c^((1-r)*z)*z^c - c^(c+c*(1-r))"
K_OF_X = "sqrt(x^(r*x)*b^(r*b))*(ln(x)+1)"
Q_OF_X = "b^(r*x)*ln(b) + b*x^(r*b-1)"
F_OF_WR = "sqrt(w^(r*w)) - w^r*ln(w) - w"
P_OF_XY = "3*x^x*y^y*c^c - (x*y*c)^x - (x*y*c)^y - (x*y*c)^c"
P1 = "-6*w*ln(w)^2 + 4"
P2 = "27*w^2*ln(w)^4 - 24*w*ln(w)^2 + 4"
UPSILON = "x^s - x - y^s + y"


def _sub(text: str, **names) -> str:
    """Textual substitution of whole identifiers (used to build DSL)."""
    e = parse_expr(text)
    return ex.render(ex.substitute(e, {k: parse_expr(v) for k, v in names.items()}))


def _derivative(text: str, name: str) -> str:
    return ex.render(ex.differentiate(parse_expr(text), name))


def _claims() -> dict[str, list[Part]]:
    fprime = f"s*t^(s-1) - 1"
    g = G_OF_S
    dm = _derivative(M_OF_Z, "z")
    ddm = _derivative(dm, "z")
    dq = _derivative(Q_OF_Z, "z")
    dK = _derivative(K_OF_X, "x")
    dQ = _derivative(Q_OF_X, "x")
    dF = _derivative(F_OF_WR, "r")
    P = parse_expr(P_OF_XY)
    grad = [ex.differentiate(P, v) for v in ("x", "y")]
    hess = ex.hessian(P, ["x", "y"])
    at_cc = {"x": ex.var("c"), "y": ex.var("c")}
    pxx = ex.render(ex.substitute(hess[0][0], at_cc))
    pxy = ex.render(ex.substitute(hess[0][1], at_cc))
    det = f"({pxx})^2 - ({pxy})^2"
    zmax = "-1/(r*ln(c))"

    def unit_c(rng):
        return {"c": _unit(rng, 1e-3, 0.999), "r": _unit(rng, 0.05, math.e)}

    return {
        "PROP1_F_INC": [
            inequality("f' > 0 for t > g(s), s > 1",
                       f"stmt F_INC: forall s in [1.01,8], u in [0.001,10] "
                       f"with t = ({g})*(1+u): {fprime} >= 0"),
        ],
        "PROP1_F_DEC": [
            inequality("f' < 0 for 0 < t < g(s), s > 1",
                       f"stmt F_DEC: forall s in [1.01,8], u in (0,0.999] "
                       f"with t = ({g})*u: {fprime} <= 0"),
        ],
        "PROP1_G_INC": [
            inequality("g' > 0 on ]0,0.999]",
                       f"stmt G_INC_LO: forall s in (0,0.999]: "
                       f"{_derivative(g, 's')} >= 0"),
            inequality("g' > 0 on [1.001,1000]",
                       f"stmt G_INC_HI: forall s in [1.001,1000]: "
                       f"{_derivative(g, 's')} >= 0"),
        ],
        "PROP1_G_ASYMPTOTE": [
            inequality("g(t) < 1 for t > 1",
                       f"stmt G_BELOW: forall s in [1.001,1000000]: {g} <= 1"),
            inequality("1 - g(t) <= ln(t)/(t-1) for t > 1",
                       f"stmt G_GAP: forall s in [1.001,1000000]: "
                       f"1 - {g} <= ln(s)/(s-1)", strict=False),
            point_sign("1 - g(1e12) - 1e-10 < 0", f"1 - {_sub(g, s='1000000000000')} - 1/10000000000",
                       {}, -1),
        ],
        "NAPIER": [
            # with a = b + d, ln a - ln b = ln(1 + d/b) avoids cancellation
            inequality("1/a < (ln a - ln b)/(a - b)",
                       "stmt NAPIER_LO: forall b in [0.1,2], d in [0.001,1.9] with a = b + d: "
                       "ln(1 + d/b)/d >= 1/a"),
            inequality("(ln a - ln b)/(a - b) < 1/b",
                       "stmt NAPIER_HI: forall b in [0.1,2], d in [0.001,1.9] with a = b + d: "
                       "ln(1 + d/b)/d <= 1/b"),
            identity("ln(1 + d/b)/d = (ln a - ln b)/(a - b)", "ln(1 + d/b)/d",
                     "(ln(b + d) - ln(b))/d",
                     lambda rng: {"b": _unit(rng, 0.1, 2), "d": _unit(rng, 0.001, 1.9)},
                     tol=1e-20),
        ],
        "TLNT": [
            inequality("-r t ln t <= 1 on (0,1] x [0,e]",
                       "stmt TLNT: forall t in (0,1], r in [0,e]: 1 + r*t*ln(t) >= 0",
                       strict=False),
            identity("maximum r/e at t = 1/e", "-r*t*ln(t)", "r/e",
                     lambda rng: {"t": mpmath.exp(-1), "r": _unit(rng, 0, math.e)}),
        ],
        "M_PROPS": [
            identity("m(c) = 0", _sub(M_OF_Z, z="c"), "0", unit_c),
            identity("m(1) = c^r (1 - c^(rc+1-r))", _sub(M_OF_Z, z="1"),
                     "c^r*(1 - c^(r*c+1-r))", unit_c),
            inequality("m(1) >= 0 on Omega_1, r <= 1",
                       "stmt M1_A: forall c in (0,1], r in (0,1]: c^r*(1 - c^(r*c+1-r)) >= 0",
                       strict=False),
            inequality("m(1) >= 0 on Omega_1, r >= 1",
                       "stmt M1_B: forall u in (0,1], r in [1,e] with c = (r-1)/r + u/r: "
                       "c^r*(1 - c^(r*c+1-r)) >= 0", strict=False),
            identity("m'(z_max) = 0", _sub(dm, z=zmax), "0", unit_c, tol=1e-24),
            inequality("m''(z_max) < 0",
                       f"stmt M_CONCAVE: forall c in (0,0.999], r in [0.01,e]: "
                       f"{_sub(ddm, z=zmax)} <= 0"),
            inequality("z_max >= c",
                       f"stmt M_ZMAX: forall c in (0,1), r in (0,e]: {zmax} >= c",
                       strict=False),
        ],
        "Q_FUNC_PROPS": [
            identity("q(c) = 0", _sub(Q_OF_Z, z="c"), "0", unit_c),
            identity("q(1) = c^(1-r) (1 - c^(c+(c-1)(1-r)))", _sub(Q_OF_Z, z="1"),
                     "c^(1-r)*(1 - c^(c+(c-1)*(1-r)))", unit_c),
            inequality("q(1) >= 0 on Omega_2",
                       "stmt Q1: forall u in (0,1], r in [1.001,e] with c = u*(r-1)/r: "
                       "c^(1-r)*(1 - c^(c+(c-1)*(1-r))) >= 0", strict=False),
            inequality("q' >= 0 on [c,1] for (r,c) in Omega_2",
                       f"stmt Q_INC: forall u in (0,1], v in [0,1], r in [1.001,e] "
                       f"with c = u*(r-1)/r, z = c + v*(1-c): {dq} >= 0", strict=False),
        ],
        "K_INC": [
            inequality("K' > 0 on ]0,1]",
                       f"stmt K_INC: forall x in (0,1], b in (0,1], r in [0,e]: {dK} >= 0"),
            identity("K' = sqrt(x^(rx) b^(rb)) (r/2 (ln x + 1)^2 + 1/x)", dK,
                     "sqrt(x^(r*x)*b^(r*b))*(r/2*(ln(x)+1)^2 + 1/x)",
                     lambda rng: {"x": _unit(rng), "b": _unit(rng), "r": _unit(rng, 0, math.e)}),
        ],
        "Q_PRIME_SIGN": [
            identity("Q' = r b^(rx) ln(b)^2 + b (rb-1) x^(rb-2)", dQ,
                     "r*b^(r*x)*ln(b)^2 + b*(r*b-1)*x^(r*b-2)",
                     lambda rng: {"x": _unit(rng), "b": _unit(rng), "r": _unit(rng, 0, math.e)}),
            # p = rb is a coordinate so the sign of rb - 1 is exact
            inequality("rb >= 1 gives Q' > 0 (Lambda_1)",
                       f"stmt LAMBDA1: forall x in (0,1], b in [0.3679,0.999], u in [0,1] "
                       f"with p = 1 + u*(e*b - 1): "
                       f"{_sub('r*b^(r*x)*ln(b)^2 + b*(p-1)*x^(p-2)', r='p/b')} >= 0"),
            inequality("b = 1, r < 1 gives Q' < 0 (Lambda_2)",
                       f"stmt LAMBDA2: forall x in (0,1], r in [0.001,0.999]: "
                       f"{_sub(dQ, b='1')} <= 0"),
            # a sign change of Q' from -infinity at 0+ forces Q'(1) > 0
            inequality("r = 1, 0 < b < 1 lies in Lambda_3, so Q'(1) > 0",
                       f"stmt LAMBDA3: forall b in (0,1): {_sub(dQ, x='1', r='1')} >= 0"),
        ],
        "F_DECREASING_IN_R": [
            inequality("F_r < 0 for w in ]0,1[",
                       f"stmt F_R: forall w in (0,0.999], r in [0,e]: {dF} <= 0"),
            identity("F_r = ln(w) ((w/2) sqrt(w^(rw)) - w^r ln(w))", dF,
                     "ln(w)*((w/2)*sqrt(w^(r*w)) - w^r*ln(w))",
                     lambda rng: {"w": _unit(rng), "r": _unit(rng, 0, math.e)}),
            inequality("F(w,e) > 0 on ]0,1[",
                       f"stmt F_E: forall w in (0,0.999], r in [0,e]: {F_OF_WR} >= 0", r="e"),
            identity("F(1,e) = 0", _sub(F_OF_WR, w="1"), "0",
                     lambda rng: {"r": mpmath.e}),
        ],
        "P_STATIONARY": [
            identity("P_x(c,c) = 0", ex.render(ex.substitute(grad[0], at_cc)), "0",
                     lambda rng: {"c": _unit(rng)}, tol=1e-25),
            identity("P_y(c,c) = 0", ex.render(ex.substitute(grad[1], at_cc)), "0",
                     lambda rng: {"c": _unit(rng)}, tol=1e-25),
        ],
        "P_HESSIAN_PSD": [
            inequality("P_xx(c,c) > 0", f"stmt PXX: forall c in (0,1]: {pxx} >= 0"),
            inequality("det Hess P(c,c) >= 0", f"stmt PDET: forall c in (0,1]: {det} >= 0",
                       strict=False),
        ],
        "P1_POSITIVITY": [
            inequality("P1(w) > 0 on ]0,1]", f"stmt P1: forall w in (0,1]: {P1} >= 0"),
        ],
        "P2_POSITIVITY": [
            inequality("P2(w) > 0 on ]0,1]", f"stmt P2: forall w in (0,1]: {P2} >= 0"),
        ],
        "UPSILON_NONNEG": [
            inequality("Upsilon(x,y) >= 0 on [0,1]^2 for a/b > 1",
                       f"stmt UPSILON: forall x in [0,1], y in [0,1], s in [1.01,10]: "
                       f"{UPSILON} >= 0", strict=False),
        ],
        "LOG_BOUND": [
            inequality("ln r > (r-1)/r on ]0,0.999]",
                       "stmt LOG_LO: forall r in (0,0.999]: ln(r) >= (r-1)/r"),
            inequality("ln r > (r-1)/r on [1.001,1000]",
                       "stmt LOG_HI: forall r in [1.001,1000]: ln(r) >= (r-1)/r"),
        ],
    }


CLAIM_IDS = (
    "PROP1_F_INC", "PROP1_F_DEC", "PROP1_G_INC", "PROP1_G_ASYMPTOTE", "NAPIER", "TLNT",
    "M_PROPS", "Q_FUNC_PROPS", "K_INC", "Q_PRIME_SIGN", "F_DECREASING_IN_R", "P_STATIONARY",
    "P_HESSIAN_PSD", "P1_POSITIVITY", "P2_POSITIVITY", "UPSILON_NONNEG", "LOG_BOUND",
)

# closed-form expressions used by the claims, exposed for audits
FORMULAS = {
    "f": "t^s - t - g^s + g",
    "g": G_OF_S,
    "h": "-r*t*ln(t)",
    "m": M_OF_Z,
    "q": Q_OF_Z,
    "H": "2*sqrt(x^(r*x)*b^(r*b)) - b^(r*x) - x^(r*b)",
    "K": K_OF_X,
    "Q": Q_OF_X,
    "F": F_OF_WR,
    "P": P_OF_XY,
    "P1": P1,
    "P2": P2,
    "Upsilon": UPSILON,
}


def check_claim(claim_id: str, budget: Budget = Budget()) -> ClaimReport:
    """Evaluate one claim; raises ``KeyError`` for an unknown id."""
    table = _claims()
    if claim_id not in table:
        raise KeyError(f"unknown claim {claim_id!r}")
    evidence = []
    status = HOLDS
    witness = None
    for part in table[claim_id]:
        try:
            ev = part.run(budget)
        except ex.EvalDomainError as err:
            ev = {"part": part.label, "status": INCONCLUSIVE, "reason": str(err)}
        evidence.append(ev)
        if ev["status"] == FAILS:
            status = FAILS
            if witness is None:
                witness = ev.get("witness")
        elif ev["status"] == INCONCLUSIVE and status == HOLDS:
            status = INCONCLUSIVE
    return ClaimReport(claim_id, status, evidence, witness)

from __future__ import annotations

import math
import random

import mpmath
import pytest

from powexp import expr as ex
from powexp.dsl import DSLError, parse, parse_expr
from powexp.interval import Interval
from powexp.prover import lower_bound

T1 = "stmt T1: forall a in (0,1], b in (0,1], r in [0,e]: a^(r*a)+b^(r*b) - (a^(r*b)+b^(r*a)) >= 0"


def test_parse_statement_shape():
    s = parse(T1)
    assert s.id == "T1"
    assert [b.name for b in s.vars] == ["a", "b"]
    assert [p.name for p in s.params] == ["r"]
    assert s.vars[0].lo_open and not s.vars[0].hi_open


def test_identity_statement_gap_is_zero():
    s = parse("stmt Z: forall x in [0,1]: x - x >= 0")
    for x in ("0", "0.25", "1"):
        assert ex.eval_point(s.gap, {"x": x}, 96) == 0


def test_unbound_variable_rejected():
    with pytest.raises(DSLError):
        parse("stmt BAD: forall a in [0,1]: a + q >= 0")


def test_render_parse_round_trip():
    e = parse_expr("2*sqrt(x^(r*x)*b^(r*b))*(ln(x)+1) - b^(r*x) / exp(-x)")
    assert parse_expr(ex.render(e)) == e


def test_eval_point_on_equality_manifold():
    g = parse(T1).gap
    v = ex.eval_point(g, {"a": "0.3", "b": "0.3", "r": 2}, 160)
    assert abs(v) < mpmath.mpf(10) ** -40


def test_eval_point_hand_value():
    g = parse(T1).gap
    v = ex.eval_point(g, {"a": 1, "b": "0.5", "r": 2}, 128)
    assert abs(v - mpmath.mpf("0.25")) < mpmath.mpf(10) ** -30


def test_zero_power_convention_in_point_eval():
    e = parse_expr("a^(3*b) + b^(3*a) + 2^(-4)*(a - b)^4 - 2")
    assert ex.eval_point(e, {"a": 2, "b": 0}, 96) == 0


def test_eval_interval_point_box_on_manifold():
    g = parse(T1).gap
    box = {k: Interval(v, v, prec=96) for k, v in (("a", 0.5), ("b", 0.5), ("r", 2))}
    enc = ex.eval_interval(g, box, 96)
    assert enc.lo <= 0 <= enc.hi and enc.hi - enc.lo <= 1e-20


def test_eval_interval_tlnt_bound():
    # the true range is [-0.2 e ln 0.2, 1] with the maximum 1 at t = 1/e, so
    # a sound enclosure can only approach 1 from above under subdivision
    h = parse_expr("-r*t*ln(t)")
    enc = ex.eval_interval(h, {"t": Interval(0.2, 0.5), "r": Interval.e(96)}, 96)
    assert enc.lo >= 0 and enc.lo <= 0.875 and enc.hi >= 1
    neg = parse_expr("r*t*ln(t)")
    edges = [0.2 + 0.3 * i / 400 for i in range(401)]
    top = max(-lower_bound(neg, {"t": (a, b), "r": (math.e, math.e)})
              for a, b in zip(edges, edges[1:]))
    assert 1 <= top <= 1 + 1e-4


def test_interval_contains_random_points():
    e = parse_expr("x^(r*y) + y^(r*x) - 2*sqrt(x*y)*ln(x+y)")
    rng = random.Random(3)
    for _ in range(200):
        lo = {k: rng.uniform(0.05, 1.5) for k in "xyr"}
        hi = {k: lo[k] + rng.uniform(0, 0.3) for k in "xyr"}
        enc = ex.eval_interval(e, {k: Interval(lo[k], hi[k]) for k in "xyr"}, 96)
        pt = {k: lo[k] + rng.random() * (hi[k] - lo[k]) for k in "xyr"}
        assert enc.lo <= ex.eval_point(e, pt, 128) <= enc.hi


def test_derivative_critical_point():
    d = ex.differentiate(parse_expr("x^(r*x)"), "x")
    with mpmath.workprec(128):
        v = ex.eval_point(d, {"x": mpmath.exp(-1), "r": 1}, 128)
    assert abs(v) < mpmath.mpf(10) ** -30


def test_m_prime_vanishes_at_zmax():
    d = ex.differentiate(parse_expr("z*c^(r*z) - c^(r*c+1)"), "z")
    with mpmath.workprec(128):
        c, r = mpmath.mpf("0.2"), mpmath.mpf(2)
        z = -1 / (r * mpmath.log(c))
        assert abs(ex.eval_point(d, {"z": z, "c": c, "r": r}, 128)) < mpmath.mpf(10) ** -30


def test_p_gradient_zero_on_diagonal():
    P = parse_expr("3*x^x*y^y*c^c - (x*y*c)^x - (x*y*c)^y - (x*y*c)^c")
    px = ex.differentiate(P, "x")
    v = ex.eval_point(px, {"x": "0.5", "y": "0.5", "c": "0.5"}, 128)
    assert abs(v) < mpmath.mpf(10) ** -30


def test_hessian_of_quadratic():
    H = ex.hessian(parse_expr("x^2 + y^2"), ["x", "y"])
    assert [[ex.eval_point(h, {}, 53) for h in row] for row in H] == [[2, 0], [0, 2]]


def test_p_hessian_entries_against_closed_forms():
    P = parse_expr("3*x^x*y^y*c^c - (x*y*c)^x - (x*y*c)^y - (x*y*c)^c")
    H = ex.hessian(P, ["x", "y"])
    with mpmath.workprec(96):
        c = mpmath.mpf("0.5")
        pt = {"x": c, "y": c, "c": c}
        lc = mpmath.log(c)
        pxx = c ** (3 * c - 1) * (-6 * c * lc ** 2 + 4)
        pxy = c ** (3 * c - 1) * (3 * c * lc ** 2 - 2)
        assert abs(ex.eval_point(H[0][0], pt, 96) - pxx) <= mpmath.mpf(10) ** -25
        assert abs(ex.eval_point(H[0][1], pt, 96) - pxy) <= mpmath.mpf(10) ** -25


def test_substitute_and_free_vars():
    e = parse_expr("a^(r*b)")
    e2 = ex.substitute(e, {"b": parse_expr("2 - a")})
    assert ex.eval_point(e2, {"a": 1, "r": 3}, 53) == 1

from __future__ import annotations

import json
import random

import mpmath
import numpy as np
import pytest

from powexp import catalog, certs
from powexp import expr as ex
from powexp.dsl import parse, parse_expr
from powexp.prover import (ProverConfig, _tiling_errors, box_from_path, certify, inner_domain,
                           lower_bound, replay, split_point)

EQ1 = "stmt E1: forall a, b in [0.05,3], r in [0,e]: a^(r*a) + b^(r*b) >= a^(r*b) + b^(r*a)"
EQ2_SMALL = ("stmt E2: forall a, b, c in [0.2,0.6], r in [0,4]: "
             "a^(r*a) + b^(r*b) + c^(r*c) >= a^(r*b) + b^(r*c) + c^(r*a)")


@pytest.fixture(scope="module")
def eq1_cert():
    stmt = parse(EQ1).instantiate(r="e")
    return stmt, certify(stmt, ProverConfig(eps=1e-9, time_limit=300))


def test_eq1_at_e_certifies(eq1_cert):
    stmt, cert = eq1_cert
    assert isinstance(cert, certs.Certificate)
    assert cert.min_bound >= -1e-9


def test_certificate_replays(eq1_cert):
    stmt, cert = eq1_cert
    rep = replay(cert, stmt)
    assert rep.ok, rep.failures


def test_certificate_json_round_trip(eq1_cert):
    stmt, cert = eq1_cert
    text = cert.to_json()
    again = certs.Certificate.from_dict(json.loads(text))
    assert again.to_json() == text
    assert replay(again, stmt).ok


def test_replay_detects_missing_box(eq1_cert):
    stmt, cert = eq1_cert
    broken = certs.Certificate.from_dict(json.loads(cert.to_json()))
    broken.boxes = broken.boxes[1:]
    rep = replay(broken, stmt)
    assert not rep.ok and not rep.checks["tiling"]


def test_replay_detects_moved_box(eq1_cert):
    stmt, cert = eq1_cert
    broken = certs.Certificate.from_dict(json.loads(cert.to_json()))
    b = broken.boxes[0]
    broken.boxes[0] = certs.BoxRecord(b.path, tuple(v + 1e-3 for v in b.lo), b.hi, b.bound,
                                      b.method)
    assert not replay(broken, stmt).checks["paths"]


def test_replay_detects_wrong_statement(eq1_cert):
    _, cert = eq1_cert
    other = parse(EQ1).instantiate(r=2)
    assert not replay(cert, other).ok


def test_replay_detects_inflated_bound():
    stmt = parse("stmt Q: forall x in [0,1]: x^2 - x + 1/4 >= 0")
    cert = certify(stmt, ProverConfig(eps=1e-9))
    assert isinstance(cert, certs.Certificate)
    for b in cert.boxes:
        b.bound = 10.0
    assert not replay(cert, stmt).checks["spot"]


def test_r_zero_is_identically_zero():
    stmt = parse(EQ1).instantiate(r=0)
    res = certify(stmt, ProverConfig(eps=1e-12))
    assert isinstance(res, certs.Certificate)
    assert len(res.boxes) == 1


def test_eq2_beyond_threshold_is_refuted():
    stmt = parse(EQ2_SMALL).instantiate(r=3)
    res = certify(stmt, ProverConfig(time_limit=300))
    assert isinstance(res, certs.Refutation)
    assert certs.replay_refutation(res, stmt.target)
    pt = {k: mpmath.mpf(v) for k, v in res.witness.items()}
    with mpmath.workprec(200):
        a, b, c = pt["a"], pt["b"], pt["c"]
        g = a**(3*a) + b**(3*b) + c**(3*c) - a**(3*b) - b**(3*c) - c**(3*a)
    assert g < 0


def test_c4_8_certifies():
    stmt = catalog.get("C4_8")
    assert isinstance(certify(stmt, ProverConfig(time_limit=300)), certs.Certificate)


def test_budget_exhaustion_is_inconclusive():
    stmt = parse(EQ1).instantiate(r="e")
    res = certify(stmt, ProverConfig(max_boxes=50))
    assert isinstance(res, certs.Inconclusive)
    assert res.reason


def test_jobs_do_not_change_certificate():
    stmt = parse(EQ1).instantiate(r=2)
    a = certify(stmt, ProverConfig(jobs=1))
    b = certify(stmt, ProverConfig(jobs=4))
    assert a.to_json() == b.to_json()


def test_lower_bound_constant():
    assert lower_bound(parse_expr("5"), {"x": (0, 1)}) >= 5 - mpmath.ldexp(1, -90)


def test_lower_bound_on_manifold_point():
    g = parse(EQ1).gap
    lb = lower_bound(g, {"a": (0.5, 0.5), "b": (0.5, 0.5), "r": (1, 1)})
    assert -1e-25 <= lb <= 0


def test_lower_bound_mean_value_not_worse_and_sound():
    rng = random.Random(11)
    g = parse(EQ1).gap
    for _ in range(150):
        box = {}
        for k in ("a", "b", "r"):
            lo = rng.uniform(0.1, 2.0)
            box[k] = (lo, lo + rng.uniform(1e-4, 0.2))
        plain = lower_bound(g, box, mean_value=False)
        mv = lower_bound(g, box, mean_value=True)
        assert mv >= plain
        pt = {k: lo + rng.random() * (hi - lo) for k, (lo, hi) in box.items()}
        assert mv <= ex.eval_point(g, pt, 128)


def test_split_point_geometric_for_wide_positive_edges():
    assert split_point(0.0, 1.0) == 0.5
    assert split_point(1e-6, 1.0) == pytest.approx(1e-3)


def test_box_from_path():
    lo, hi = box_from_path("0111", np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    assert list(lo) == [0.5, 0.5] and list(hi) == [1.0, 1.0]
    lo, hi = box_from_path("0010", np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    assert list(lo) == [0.0, 0.0] and list(hi) == [0.5, 0.5]


def test_tiling_errors():
    assert _tiling_errors(["00", "01"]) == []
    assert _tiling_errors(["00"])
    assert _tiling_errors(["00", "01", "0011"])


def test_inner_domain_is_inside():
    stmt = parse("stmt S: forall a in (0,1], r in (e,4]: a^r >= 0")
    lo, hi = inner_domain(stmt, 1e-6)
    with mpmath.workprec(200):
        assert lo[1] > mpmath.e + mpmath.mpf("1e-6") - mpmath.mpf("1e-15")
    assert lo[0] >= 1e-6 and hi[0] <= 1.0


def test_open_endpoint_faces_checked():
    stmt = catalog.get("C4_6_AB")
    res = certify(stmt, ProverConfig(time_limit=300))
    assert isinstance(res, certs.Certificate)
    assert {f["status"] for f in res.faces} == {"holds"}

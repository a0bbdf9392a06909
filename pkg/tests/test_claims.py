from __future__ import annotations

import json

import mpmath
import pytest

import oracles
from powexp import claims

EXPECTED = {
    "PROP1_F_INC": claims.HOLDS,
    "PROP1_F_DEC": claims.HOLDS,
    "PROP1_G_INC": claims.HOLDS,
    "PROP1_G_ASYMPTOTE": claims.HOLDS,
    "NAPIER": claims.HOLDS,
    "TLNT": claims.HOLDS,
    "M_PROPS": claims.HOLDS,
    "Q_FUNC_PROPS": claims.HOLDS,
    "K_INC": claims.HOLDS,
    "F_DECREASING_IN_R": claims.HOLDS,
    "P_STATIONARY": claims.HOLDS,
    "P_HESSIAN_PSD": claims.HOLDS,
    "P1_POSITIVITY": claims.HOLDS,
    "LOG_BOUND": claims.HOLDS,
    # counterexamples confirmed by the independent checks below
    "Q_PRIME_SIGN": claims.FAILS,
    "P2_POSITIVITY": claims.FAILS,
    "UPSILON_NONNEG": claims.FAILS,
}


def test_every_claim_is_known():
    assert set(claims.CLAIM_IDS) == set(EXPECTED)


@pytest.mark.parametrize("cid", sorted(EXPECTED))
def test_claim_verdict(cid):
    rep = claims.check_claim(cid)
    assert rep.status == EXPECTED[cid], rep.evidence
    if rep.status == claims.FAILS:
        assert rep.witness


def test_p2_witness_is_negative_independently():
    rep = claims.check_claim("P2_POSITIVITY")
    with mpmath.workprec(128):
        assert oracles.P2_poly(mpmath.mpf(rep.witness["w"])) < 0
        assert oracles.P2_poly(mpmath.exp(-2)) < -1


def test_p2_verdict_matches_grid():
    v, _ = oracles.p2_grid_min(10**5)
    rep = claims.check_claim("P2_POSITIVITY")
    assert (v < 0) == (rep.status == claims.FAILS)


def test_upsilon_witness_is_negative_independently():
    w = claims.check_claim("UPSILON_NONNEG").witness
    x, y, s = (mpmath.mpf(w[k]) for k in ("x", "y", "s"))
    assert x**s - x - y**s + y < 0


def test_q_prime_sign_witness():
    # Q'(1) = r b^r ln(b)^2 + b(rb - 1) at r = 1 is negative at the witness
    b = mpmath.mpf(claims.check_claim("Q_PRIME_SIGN").witness["b"])
    assert b * mpmath.log(b) ** 2 + b * (b - 1) < 0


def test_unknown_claim():
    with pytest.raises(KeyError):
        claims.check_claim("NOPE")


def test_report_json():
    rep = claims.check_claim("LOG_BOUND")
    d = json.loads(rep.to_json())
    assert d["claim"] == "LOG_BOUND" and d["status"] == claims.HOLDS
    assert all("part" in ev for ev in d["evidence"])


def test_tiny_budget_is_inconclusive():
    rep = claims.check_claim("K_INC", claims.Budget(max_boxes=3))
    assert rep.status == claims.INCONCLUSIVE

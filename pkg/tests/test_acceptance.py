"""Acceptance criteria, one test and one printed pass/fail line each.

Expected values come from the oracles in ``oracles.py`` (plain mpmath or
numpy), not from the package under test.  Criteria that the mathematics does
not allow to pass are run as stated and reported as FAIL.
"""

from __future__ import annotations

import math
import random
import time

import mpmath
import numpy as np
import pytest
from scipy.optimize import minimize as sp_minimize

import oracles
from powexp import catalog, certs, claims, cli
from powexp import expr as ex
from powexp.dsl import parse_expr
from powexp.hunter import HuntConfig, check_stationary, find_violation
from powexp.prover import ProverConfig, certify, replay

EPS = 1e-9
LIMIT = 300.0
INV_E = math.exp(-1)

_EMITTED: list = []  # (statement, certificate) pairs for criterion 7


@pytest.fixture(scope="module")
def proved_runs():
    runs = {}
    for label, sid, n in (("T1_EQ1", "T1_EQ1", None), ("T3_EQ3", "T3_EQ3", None),
                          ("T2_EQ2", "T2_EQ2", None), ("T4_EQ4[n=2]", "T4_EQ4", 2),
                          ("T4_EQ4[n=3]", "T4_EQ4", 3), ("T4_EQ4[n=4]", "T4_EQ4", 4)):
        stmt = catalog.get(sid, n=n)
        t0 = time.perf_counter()
        res = certify(stmt, ProverConfig(eps=EPS, time_limit=LIMIT))
        runs[label] = (stmt, res, time.perf_counter() - t0)
        if isinstance(res, certs.Certificate):
            _EMITTED.append((stmt, res))
    return runs


def test_criterion_1_certification(proved_runs, criterion):
    parts, ok = [], True
    for label, (stmt, res, secs) in proved_runs.items():
        good = isinstance(res, certs.Certificate) and secs <= LIMIT
        ok &= good
        parts.append(f"{label}={res.kind}({secs:.0f}s)")
    criterion(1, ok, "certificates at eps=1e-9 within 300 s: " + ", ".join(parts))
    assert ok


# --------------------------------------------------------------- criterion 2


def _manifold_points(rng, names, tie, fixed=None):
    with mpmath.workprec(128):
        t = mpmath.mpf(rng.uniform(0.01, 1.0))
        pt = {}
        for n in names:
            if n in tie:
                pt[n] = t
            elif n == "r":
                pt[n] = mpmath.mpf(rng.uniform(0, 1)) * mpmath.e
            else:
                pt[n] = mpmath.mpf(rng.uniform(0.01, 1.0))
        pt.update(fixed or {})
    return pt


def test_criterion_2_equality_manifolds(criterion):
    rng = random.Random(2)
    cases = [
        ("T1 a=b", catalog.get("T1_EQ1"), ["a", "b", "r"], {"a", "b"}, None),
        ("T3 a=b", catalog.get("T3_EQ3"), ["a", "b", "r"], {"a", "b"}, None),
        ("T2 a=b=c", catalog.get("T2_EQ2"), ["a", "b", "c", "r"], {"a", "b", "c"}, None),
        ("T1 r=0", catalog.get("T1_EQ1"), ["a", "b", "r"], set(), {"r": mpmath.mpf(0)}),
        ("T2 r=0", catalog.get("T2_EQ2"), ["a", "b", "c", "r"], set(), {"r": mpmath.mpf(0)}),
        ("T3 r=0", catalog.get("T3_EQ3"), ["a", "b", "r"], set(), {"r": mpmath.mpf(0)}),
    ]
    for n in (2, 3, 4):
        names = [f"x_{i}" for i in range(1, n + 1)]
        cases.append((f"T4 n={n} diag", catalog.get("T4_EQ4", n=n), names, set(names), None))
    five = [f"x_{i}" for i in range(1, 6)]
    cases.append(("GEN_EQ5 n=5 diag", catalog.get("GEN_EQ5", n=5), five + ["r"], set(five), None))
    worst, detail = mpmath.mpf(0), []
    for label, stmt, names, tie, fixed in cases:
        m = mpmath.mpf(0)
        for _ in range(1000):
            pt = _manifold_points(rng, names, tie, fixed)
            m = max(m, abs(ex.eval_point(stmt.gap, pt, 128)))
        worst = max(worst, m)
        detail.append(f"{label}:{mpmath.nstr(m, 3)}")
    ok = worst <= mpmath.mpf("1e-30")
    criterion(2, ok, f"max |gap| on 10^3 points per manifold = {mpmath.nstr(worst, 3)} "
                     f"(tol 1e-30, 128 bits); " + ", ".join(detail))
    assert ok


# --------------------------------------------------------------- criterion 3


def test_criterion_3_sharpness(criterion):
    stmt = catalog.get("SHARP_EQ2_RGT_E", r="3.0")
    ref = find_violation(stmt, HuntConfig(seed=0))
    grid_min, grid_at = oracles.eq2_grid_min(3.0, INV_E, 0.15, points=200)
    lo, hi = INV_E - 0.15, INV_E + 0.15

    def f(v):
        a, b, c = v
        return a**(3*a) + b**(3*b) + c**(3*c) - a**(3*b) - b**(3*c) - c**(3*a)

    polished = sp_minimize(f, grid_at, method="L-BFGS-B", bounds=[(lo, hi)] * 3).fun
    oracle_neg = min(grid_min, polished) < 0
    if not isinstance(ref, certs.Refutation):
        criterion(3, False, f"no refutation ({ref.kind}); grid oracle min {grid_min:.3g}")
        pytest.fail("no refutation")
    replays = certs.replay_refutation(ref, stmt.target, 192)
    dist = max(abs(float(v) - INV_E) for v in ref.witness.values())
    ok = replays and dist <= 0.15 and oracle_neg
    criterion(3, ok, f"witness {ref.witness} replays@192={replays}, max |x-1/e|={dist:.3f} "
                     f"(tol 0.15), 200^3 grid+polish min near 1/e={min(grid_min, polished):.3g}")
    assert ok


# --------------------------------------------------------------- criterion 4

H_TEXT = "2*sqrt(x^(r*x)*b^(r*b)) - b^(r*x) - x^(r*b)"


def _audit_items():
    H = parse_expr(H_TEXT)
    Q = parse_expr(claims.Q_OF_X)
    m = parse_expr(claims.M_OF_Z)
    P = parse_expr(claims.P_OF_XY)
    dH = ex.differentiate(H, "x")
    dm = ex.differentiate(m, "z")
    Px, Py = ex.differentiate(P, "x"), ex.differentiate(P, "y")
    hx = {"b": (0.01, 1), "r": (0.01, math.e), "x": (0.01, 1)}
    mz = {"c": (0.01, 0.99), "r": (0.01, math.e), "z": (0.01, 1)}
    pxy = {"x": (0.01, 1), "y": (0.01, 1), "c": (0.01, 1)}

    def P_part(i):
        return lambda x, y, c: oracles.P_parts_closed(x, y, c)[i]

    return [
        ("H'", H, dH, "x", hx, lambda x, b, r: oracles.H1_closed(x, b, r)),
        ("H''", dH, ex.differentiate(dH, "x"), "x", hx, lambda x, b, r: oracles.H2_closed(x, b, r)),
        ("Q'", Q, ex.differentiate(Q, "x"), "x", hx, lambda x, b, r: oracles.Q1_closed(x, b, r)),
        ("m'", m, dm, "z", mz, lambda z, c, r: oracles.m1_closed(z, c, r)),
        ("m''", dm, ex.differentiate(dm, "z"), "z", mz, lambda z, c, r: oracles.m2_closed(z, c, r)),
        ("P_x", P, Px, "x", pxy, P_part(0)),
        ("P_y", P, Py, "y", pxy, P_part(1)),
        ("P_xx", Px, ex.differentiate(Px, "x"), "x", pxy, P_part(2)),
        ("P_yy", Py, ex.differentiate(Py, "y"), "y", pxy, P_part(3)),
        ("P_xy", Px, ex.differentiate(Px, "y"), "y", pxy, P_part(4)),
    ]


def test_criterion_4_derivative_audit(criterion):
    rng = random.Random(4)
    failed, detail = [], []
    for label, f, df, var, dom, closed in _audit_items():
        worst_cf = worst_fd = 0.0
        for _ in range(1000):
            with mpmath.workprec(96):
                pt = {k: mpmath.mpf(rng.uniform(*dom[k])) for k in dom}
                sym = ex.eval_point(df, pt, 96)
                ref = closed(**pt)
            worst_cf = max(worst_cf, oracles.rel_err(sym, ref))
            with mpmath.workprec(96):
                h = mpmath.mpf("1e-9") * max(1, abs(pt[var]))
                up = dict(pt, **{var: pt[var] + h})
                dn = dict(pt, **{var: pt[var] - h})
                fd = (ex.eval_point(f, up, 96) - ex.eval_point(f, dn, 96)) / (2 * h)
            worst_fd = max(worst_fd, oracles.rel_err(sym, fd))
        good = worst_cf <= 1e-20 and worst_fd <= 1e-6
        if not good:
            failed.append(label)
        detail.append(f"{label}: closed {worst_cf:.1e}, fd {worst_fd:.1e}")
    ok = not failed
    criterion(4, ok, "rel err vs closed forms (tol 1e-20, 96 bits) and finite differences "
                     f"(tol 1e-6) on 10^3 points; failing: {failed or 'none'}; "
                     + "; ".join(detail))
    assert ok


# --------------------------------------------------------------- criterion 5


def test_criterion_5_claims(criterion):
    must_hold = ("TLNT", "NAPIER", "K_INC", "UPSILON_NONNEG", "P1_POSITIVITY", "LOG_BOUND")
    verdicts = {cid: claims.check_claim(cid).status for cid in must_hold}
    p2 = claims.check_claim("P2_POSITIVITY")
    grid_min, grid_w = oracles.p2_grid_min(10**6)
    grid_verdict = claims.FAILS if grid_min < 0 else claims.HOLDS
    ok = all(v == claims.HOLDS for v in verdicts.values()) and p2.status == grid_verdict
    criterion(5, ok, ", ".join(f"{k}={v}" for k, v in verdicts.items())
              + f"; P2_POSITIVITY={p2.status} witness {p2.witness}, 10^6 grid oracle="
              f"{grid_verdict} (min {grid_min:.4f} at w={grid_w:.4f})")
    assert ok


# --------------------------------------------------------------- criterion 6


def test_criterion_6_stationarity(criterion):
    rng = random.Random(6)
    P = parse_expr(claims.P_OF_XY)
    hess = ex.hessian(P, ["x", "y"])
    worst_grad = mpmath.mpf(0)
    worst_det = 0.0
    for _ in range(50):
        with mpmath.workprec(96):
            c = mpmath.mpf(rng.uniform(1e-3, 1.0))
        pt = {"x": c, "y": c, "c": c}
        rep = check_stationary(P, pt, precision=96, names=["x", "y"])
        worst_grad = max(worst_grad, rep.grad_norm)
        with mpmath.workprec(96):
            h = [[ex.eval_point(hess[i][j], pt, 96) for j in range(2)] for i in range(2)]
            det = h[0][0] * h[1][1] - h[0][1] * h[1][0]
            ref = oracles.hessian_det_closed(c)
        worst_det = max(worst_det, oracles.rel_err(det, ref))
    ok = worst_grad <= mpmath.mpf("1e-25") and worst_det <= 1e-18
    criterion(6, ok, f"max grad norm at (c,c) = {mpmath.nstr(worst_grad, 3)} (tol 1e-25); "
                     f"max rel err det vs c^(2(3c-1)) P2(c) = {worst_det:.3g} (tol 1e-18)")
    assert ok


# --------------------------------------------------------------- criterion 7


def test_criterion_7_soundness(proved_runs, criterion):
    per_op = 10**5
    bad_scalar = {op: oracles.scalar_violations(op, per_op, seed=7) for op in oracles.SCALAR_OPS}
    bad_batch = {op: oracles.batch_violations(op, per_op, seed=7) for op in oracles.SCALAR_OPS}
    replays = [(stmt.id, replay(cert, stmt).ok) for stmt, cert in _EMITTED]
    ok = (not any(bad_scalar.values()) and not any(bad_batch.values())
          and all(r for _, r in replays))
    criterion(7, ok, f"10^5 containment checks per op: scalar violations "
                     f"{sum(bad_scalar.values())}, batch violations {sum(bad_batch.values())}; "
                     f"certificate replays {replays}")
    assert ok


# --------------------------------------------------------------- criterion 8


def test_criterion_8_determinism(tmp_path, criterion, capsys):
    a, b = tmp_path / "j1.json", tmp_path / "j8.json"
    cli.run(["verify", "T2_EQ2", "--jobs", "1", "--out", str(a), "--quiet"])
    cli.run(["verify", "T2_EQ2", "--jobs", "8", "--out", str(b), "--quiet"])
    same_verify = a.read_bytes() == b.read_bytes()
    h1, h2 = tmp_path / "h1.json", tmp_path / "h2.json"
    for p in (h1, h2):
        cli.run(["hunt", "SHARP_EQ2_RGT_E", "--r", "3.0", "--seed", "7", "--out", str(p),
                 "--quiet"])
    same_hunt = h1.read_bytes() == h2.read_bytes()
    capsys.readouterr()
    ok = same_verify and same_hunt
    criterion(8, ok, f"verify T2_EQ2 --jobs 1 vs --jobs 8 byte-identical={same_verify}; "
                     f"hunt seed 7 twice identical={same_hunt}")
    assert ok


# --------------------------------------------------------------- criterion 9


def test_criterion_9_open_conjectures(criterion):
    detail, ok = [], True
    for sid, n in (("GEN_EQ5", 5), ("GEN_EQ6", 3), ("NEWCONJ3", 3)):
        stmt = catalog.get(sid, n=n)
        res = certify(stmt, ProverConfig(eps=EPS, time_limit=120))
        if isinstance(res, certs.Refutation):
            good = certs.replay_refutation(res, stmt.target)
            note = f"refutation replays={good} (finding) at {res.witness}"
        elif isinstance(res, certs.Certificate):
            good = replay(res, stmt).ok
            note = f"certificate replays={good}"
        else:
            good = True
            note = f"inconclusive ({res.reason})"
        ok &= good
        detail.append(f"{sid}[n={n}]: {note}")
    criterion(9, ok, "no unreplayable refutation; " + "; ".join(detail))
    assert ok

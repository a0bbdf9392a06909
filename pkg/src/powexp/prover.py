"""Interval branch-and-bound certification of gap >= -eps over a box.

Each box gets the best of several lower bounds:

* ``plain``: direct interval evaluation of the target;
* ``mv``: the mean-value form f(mid) + grad f(B) . (B - mid);
* ``taylor2``: f(mid) + grad f(mid) . d + d' H(B) d / 2 with d = B - mid;
* ``tube``: for boxes near an equality manifold (a group of variables whose
  common value makes the target and its gradient vanish), half the lowest
  eigenvalue of the transverse Hessian times the squared distance;
* ``face``: for a domain face on which the target vanishes identically,
  |x_k - c| times a bound of the normal derivative.

Boxes whose bound reaches -eps are closed.  Others are split along the
dimension with the largest derivative smear, worst bound first, in fixed
size batches so the result does not depend on the number of threads.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
import time
from dataclasses import dataclass

import mpmath
import numpy as np

from powexp import batch as bt
from powexp import expr as ex
from powexp.certs import BoxRecord, Certificate, Inconclusive, Refutation, fstr, make_refutation
from powexp.interval import Interval
from powexp.statement import Statement

PLAIN, MV, TAYLOR2, TUBE, FACE = "plain", "mv", "taylor2", "tube", "face"


@dataclass(frozen=True)
class ProverConfig:
    eps: float = 1e-9
    max_depth: int = 60
    max_boxes: int = 10_000_000
    precision: int = 96
    mean_value: bool = True
    tube: bool = True
    delta_eq: float = 1e-4
    delta: float = 1e-6
    jobs: int = 1
    batch: int = 4096
    faces: bool = True
    face_max_boxes: int = 200_000
    time_limit: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.delta_eq < 0:
            raise ValueError("delta_eq must be nonnegative")


# ------------------------------------------------------------------ manifolds


def detect_groups(target: ex.Expr, names: list[str], domains: dict, candidates: list[str],
                  samples: int = 6, prec: int = 160) -> list[list[str]]:
    """Largest variable groups whose equalization zeroes target and gradient.

    The identity is tested at random points of the domain with ``prec``
    bits; exact identities pass with values near 2**-prec, anything else
    fails by many orders of magnitude.  Group members must share a domain.
    """
    rng = random.Random(20240611)
    grad = {n: ex.differentiate(target, n) for n in candidates}
    tol = mpmath.mpf(2) ** (-prec // 2)
    found: list[list[str]] = []
    for size in range(len(candidates), 1, -1):
        for group in itertools.combinations(candidates, size):
            if len({domains[g] for g in group}) != 1:
                continue
            if any(set(group) & set(f) for f in found):
                continue
            if _vanishes(target, grad, group, names, domains, rng, samples, prec, tol):
                found.append(list(group))
        if found:
            break
    return found


def _vanishes(target, grad, group, names, domains, rng, samples, prec, tol) -> bool:
    for _ in range(samples):
        point = {}
        for n in names:
            lo, hi = domains[n]
            point[n] = lo + (hi - lo) * rng.uniform(0.05, 0.95)
        t = point[group[0]]
        for g in group:
            point[g] = t
        try:
            with mpmath.workprec(prec):
                if abs(ex.eval_point(target, point, prec)) > tol:
                    return False
                if any(abs(ex.eval_point(grad[g], point, prec)) > tol for g in group):
                    return False
        except ex.EvalDomainError:
            return False
    return True


def detect_zero_faces(target: ex.Expr, names: list[str], domains: dict,
                      samples: int = 6, prec: int = 160) -> list[tuple[str, float]]:
    """Domain faces x_k = c (c an endpoint) on which the target vanishes identically."""
    rng = random.Random(20240612)
    tol = mpmath.mpf(2) ** (-prec // 2)
    out = []
    for k in names:
        for c in sorted(set(domains[k])):
            if not math.isfinite(c) or domains[k][0] == domains[k][1]:
                continue
            ok = True
            for _ in range(samples):
                point = {n: domains[n][0] + (domains[n][1] - domains[n][0]) * rng.uniform(0.05, 0.95)
                         for n in names}
                point[k] = c
                try:
                    if abs(ex.eval_point(target, point, prec)) > tol:
                        ok = False
                        break
                except ex.EvalDomainError:
                    ok = False
                    break
            if ok:
                out.append((k, c))
    return out


def _same_manifold(g: ex.Expr, names, domains, groups) -> bool:
    """Whether the group manifolds of the parent also zero ``g`` and its gradient."""
    if any(v is None for v in domains.values()):
        return False
    grad = {n: ex.differentiate(g, n) for grp in groups for n in grp}
    rng = random.Random(20240613)
    tol = mpmath.mpf(2) ** -80
    return all(_vanishes(g, grad, tuple(grp), names, domains, rng, 4, 160, tol) for grp in groups)


def transverse_hessian(target: ex.Expr, group: list[str]) -> list[list[ex.Expr]]:
    """Second derivatives along the difference directions e_i - e_{i+1}."""
    d1 = [ex.sub(ex.differentiate(target, group[k]), ex.differentiate(target, group[k + 1]))
          for k in range(len(group) - 1)]
    m = len(d1)
    out = [[None] * m for _ in range(m)]
    for k in range(m):
        for l in range(k, m):
            v = ex.sub(ex.differentiate(d1[k], group[l]), ex.differentiate(d1[k], group[l + 1]))
            out[k][l] = out[l][k] = v
    return out


def interval_cholesky(ML, MH) -> np.ndarray:
    """Rows for which every symmetric matrix in [ML, MH] is positive definite.

    ``ML``/``MH`` have shape (B, m, m).  Runs the interval Cholesky
    factorization and succeeds where every pivot stays strictly positive.
    """
    B, m, _ = ML.shape
    ok = np.ones(B, dtype=bool)
    LL = np.zeros_like(ML)
    LH = np.zeros_like(MH)
    for k in range(m):
        dl, dh = ML[:, k, k], MH[:, k, k]
        for j in range(k):
            sl, sh = bt.iv_powi(LL[:, k, j], LH[:, k, j], 2)
            dl, dh = bt.iv_sub(dl, dh, sl, sh)
        ok &= dl > 0
        safe = np.where(dl > 0, dl, 1.0)
        pl, ph = bt.iv_sqrt(safe, np.maximum(dh, safe))
        LL[:, k, k], LH[:, k, k] = pl, ph
        for i in range(k + 1, m):
            al, ah = ML[:, i, k], MH[:, i, k]
            for j in range(k):
                sl, sh = bt.iv_mul(LL[:, i, j], LH[:, i, j], LL[:, k, j], LH[:, k, j])
                al, ah = bt.iv_sub(al, ah, sl, sh)
            LL[:, i, k], LH[:, i, k] = bt.iv_div(al, ah, pl, ph)
    return ok


# --------------------------------------------------------------------- bounds


class Bounder:
    """Compiled bounding machinery for one concrete target."""

    def __init__(self, target: ex.Expr, names: list[str], groups: list[list[str]] | None = None,
                 mean_value: bool = True, tube: bool = True, jobs: int = 1,
                 zero_faces: list | None = None, zero_face_side: dict | None = None):
        self.target = target
        self.zero_faces = [(list(names).index(k), c) for k, c in (zero_faces or [])]
        self.face_sub = {}
        for col, c in self.zero_faces:
            d = ex.differentiate(target, names[col])
            # sign so that f = |x_k - c| * g on the domain side of the face
            lower_face = all(c <= v for v in (zero_face_side or {}).get(names[col], (c,)))
            g = d if lower_face else ex.neg(d)
            dom = {n: (zero_face_side or {}).get(n) for n in names}
            sub_groups = groups if groups and _same_manifold(g, names, dom, groups) else []
            self.face_sub[col] = Bounder(g, names, sub_groups, mean_value, tube, jobs)
        self.names = list(names)
        self.jobs = jobs
        self.f = bt.Program([target], self.names)
        self.mean_value = mean_value
        self.grad = None
        self.hess = None
        if mean_value:
            g = ex.gradient(target, self.names)
            self.grad = bt.Program(g, self.names)
            n = len(self.names)
            H = ex.hessian(target, self.names)
            self.hess = bt.Program([H[i][j] for i in range(n) for j in range(i, n)], self.names)
        self.groups = [list(g) for g in (groups or [])] if tube else []
        self.group_cols = [[self.names.index(g) for g in grp] for grp in self.groups]
        self.tube_progs = []
        for grp in self.groups:
            M = transverse_hessian(target, grp)
            m = len(M)
            flat = [M[k][l] for k in range(m) for l in range(k, m)]
            dflat = [ex.differentiate(e, n) for e in flat for n in self.names]
            self.tube_progs.append((m, bt.Program(flat, self.names), bt.Program(dflat, self.names)))
        self.has_pow = any(n.op == "pow" and not (n.args[1].is_const and n.args[1].value.denominator == 1)
                           for n in ex.postorder([target]))

    def plain(self, lo, hi):
        L, H = self.f.interval(lo, hi, self.jobs)
        return L[:, 0], H[:, 0]

    def smooth(self, lo, hi) -> np.ndarray:
        """Rows where no real power has a base that can reach 0.

        Such rows are where the 0-power convention could make the target
        discontinuous; derivative-based bounds are skipped there.
        """
        if not self.has_pow:
            return np.ones(len(lo), dtype=bool)
        ok = np.ones(len(lo), dtype=bool)
        bases = [n.args[0] for n in ex.postorder([self.target])
                 if n.op == "pow" and not (n.args[1].is_const and n.args[1].value.denominator == 1)]
        if not hasattr(self, "_bases"):
            self._bases = bt.Program(bases, self.names)
        bl, _ = self._bases.interval(lo, hi, self.jobs)
        ok &= np.all(bl > 0, axis=1)
        return ok

    def mean_value_bound(self, lo, hi, mid):
        ml, _ = self.plain(mid, mid)
        gl, gh = self.grad.interval(lo, hi, self.jobs)
        dl, dh = bt._dn(lo - mid), bt._up(hi - mid)
        dl = np.minimum(dl, 0.0)
        dh = np.maximum(dh, 0.0)
        tl, th = bt.iv_mul(gl, gh, dl, dh)
        acc_l, acc_h = ml, ml
        for j in range(tl.shape[1]):
            acc_l, acc_h = bt.iv_add(acc_l, acc_h, tl[:, j], th[:, j])
        self.last_smear = np.maximum(np.abs(gl), np.abs(gh)) * (hi - lo)
        return acc_l

    def taylor2_bound(self, lo, hi, mid):
        """f(m) + grad f(m).(x-m) + (x-m)^T H(B) (x-m) / 2 over the box."""
        n = lo.shape[1]
        ml, _ = self.plain(mid, mid)
        gl, gh = self.grad.interval(mid, mid, self.jobs)
        HL, HH = self.hess.interval(lo, hi, self.jobs)
        dl = np.minimum(bt._dn(lo - mid), 0.0)
        dh = np.maximum(bt._up(hi - mid), 0.0)
        acc_l, acc_h = ml, ml
        for i in range(n):
            tl, th = bt.iv_mul(gl[:, i], gh[:, i], dl[:, i], dh[:, i])
            acc_l, acc_h = bt.iv_add(acc_l, acc_h, tl, th)
        col = 0
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    ql, qh = bt.iv_powi(dl[:, i], dh[:, i], 2)
                    ql, qh = ql * 0.5, qh * 0.5
                else:
                    ql, qh = bt.iv_mul(dl[:, i], dh[:, i], dl[:, j], dh[:, j])
                tl, th = bt.iv_mul(HL[:, col], HH[:, col], ql, qh)
                acc_l, acc_h = bt.iv_add(acc_l, acc_h, tl, th)
                col += 1
        return acc_l

    def face_bound(self, lo, hi, col: int, c: float) -> np.ndarray:
        """f(x) = |x_k - c| * g(xi) with g = +-df/dx_k, xi in the hull of box and face.

        g is bounded below on the hull by its own bounder (same methods).
        """
        hl, hh = lo.copy(), hi.copy()
        hl[:, col] = np.minimum(lo[:, col], c)
        hh[:, col] = np.maximum(hi[:, col], c)
        sub = self.face_sub[col]
        glb = sub.bound(hl, hh)[0]
        off = np.maximum(bt._up(hi[:, col] - c), bt._up(c - lo[:, col]))
        out = np.where(glb < 0, bt._dn(off * glb), 0.0)
        ok = self.smooth(hl, hh)
        return np.where(ok & ~np.isnan(out), out, -np.inf)

    def tube_hull(self, lo, hi, cols):
        hl, hh = lo.copy(), hi.copy()
        m = len(cols)
        mean_lo = bt._dn(np.sum(lo[:, cols], axis=1) / m)
        mean_hi = bt._up(np.sum(hi[:, cols], axis=1) / m)
        for c in cols:
            hl[:, c] = np.minimum(lo[:, c], mean_lo)
            hh[:, c] = np.maximum(hi[:, c], mean_hi)
        return hl, hh

    def tube_matrix(self, lo, hi, gi: int):
        """Enclosure of the transverse Hessian over the tube hull.

        Plain enclosure intersected with its mean-value form around the
        hull midpoint.
        """
        m, prog, dprog = self.tube_progs[gi]
        hl, hh = self.tube_hull(lo, hi, self.group_cols[gi])
        FL, FH = prog.interval(hl, hh, self.jobs)
        hm = np.minimum(np.maximum(hl + (hh - hl) * 0.5, hl), hh)
        CL, CH = prog.interval(hm, hm, self.jobs)
        DL, DH = dprog.interval(hl, hh, self.jobs)
        nv = hl.shape[1]
        ol = np.minimum(bt._dn(hl - hm), 0.0)
        oh = np.maximum(bt._up(hh - hm), 0.0)
        for e in range(FL.shape[1]):
            al, ah = CL[:, e], CH[:, e]
            for j in range(nv):
                tl, th = bt.iv_mul(DL[:, e * nv + j], DH[:, e * nv + j], ol[:, j], oh[:, j])
                al, ah = bt.iv_add(al, ah, tl, th)
            FL[:, e] = np.maximum(FL[:, e], al)
            FH[:, e] = np.minimum(FH[:, e], ah)
        B = len(lo)
        ML = np.empty((B, m, m))
        MH = np.empty((B, m, m))
        col = 0
        for k in range(m):
            for l in range(k, m):
                ML[:, k, l] = ML[:, l, k] = FL[:, col]
                MH[:, k, l] = MH[:, l, k] = FH[:, col]
                col += 1
        return ML, MH

    def tube_bound(self, lo, hi, gi: int) -> np.ndarray:
        """Second-order lower bound around the manifold of group ``gi``.

        With p the projection of x onto the manifold and c the coordinates
        of x - p in the difference basis, f(x) = c^T M(xi) c / 2 for some xi
        in the hull.  A certified positive definite M gives 0; otherwise a
        Gershgorin bound on the smallest eigenvalue times max |c|^2 / 2.
        """
        ML, MH = self.tube_matrix(lo, hi, gi)
        pd = interval_cholesky(ML, MH)
        m = ML.shape[1]
        absmax = np.maximum(np.abs(ML), np.abs(MH))
        diag = np.diagonal(ML, axis1=1, axis2=2)
        off = np.sum(absmax, axis=2) - np.diagonal(absmax, axis1=1, axis2=2)
        lam = np.min(diag - off, axis=1)
        lam = lam - np.abs(lam) * 1e-12 - 1e-300
        csq = _coord_sq_bound(lo, hi, self.group_cols[gi])
        out = np.where(lam < 0, 0.5 * lam * csq * (1 + 1e-12), 0.0)
        out = np.where(pd, 0.0, out)
        return np.where(np.isnan(out), -np.inf, out)

    def bound(self, lo, hi, want: float = 0.0, methods=(PLAIN, MV, TAYLOR2, TUBE, FACE)):
        """Lower bounds and method tags; upgrades rows whose bound is below ``want``."""
        with np.errstate(all="ignore"):
            lb, ub = self.plain(lo, hi)
            method = np.full(len(lo), PLAIN, dtype=object)
            mid = lo + (hi - lo) * 0.5
            mid = np.minimum(np.maximum(mid, lo), hi)
            mlo, mhi = self.plain(mid, mid)
            need = lb < want
            smear = np.full(lo.shape, np.nan)
            if need.any() and (self.mean_value and MV in methods):
                idx = np.nonzero(need & self.smooth(lo, hi))[0]
                if len(idx):
                    mv = self.mean_value_bound(lo[idx], hi[idx], mid[idx])
                    smear[idx] = self.last_smear
                    better = mv > lb[idx]
                    lb[idx[better]] = mv[better]
                    method[idx[better]] = MV
                    if TAYLOR2 in methods:
                        sub = idx[lb[idx] < want]
                        if len(sub):
                            t2 = self.taylor2_bound(lo[sub], hi[sub], mid[sub])
                            better = t2 > lb[sub]
                            lb[sub[better]] = t2[better]
                            method[sub[better]] = TAYLOR2
            need = lb < want
            if need.any() and self.groups and TUBE in methods:
                for gi in range(len(self.groups)):
                    idx = np.nonzero(need)[0]
                    if not len(idx):
                        break
                    hl, hh = self.tube_hull(lo[idx], hi[idx], self.group_cols[gi])
                    idx = idx[self.smooth(hl, hh)]
                    if not len(idx):
                        continue
                    tb = self.tube_bound(lo[idx], hi[idx], gi)
                    better = tb > lb[idx]
                    lb[idx[better]] = tb[better]
                    method[idx[better]] = TUBE
                    need = lb < want
            need = lb < want
            if need.any() and self.zero_faces and FACE in methods:
                for col, c in self.zero_faces:
                    idx = np.nonzero(need)[0]
                    if not len(idx):
                        break
                    fb = self.face_bound(lo[idx], hi[idx], col, c)
                    better = fb > lb[idx]
                    lb[idx[better]] = fb[better]
                    method[idx[better]] = f"{FACE}:{self.names[col]}"
                    need = lb < want
        return lb, method, ub, mid, mhi, smear

    def replay_bound(self, lo, hi, methods):
        """Recompute the bound of each box with its recorded method only."""
        lb, _ = self.plain(lo, hi)
        mid = np.minimum(np.maximum(lo + (hi - lo) * 0.5, lo), hi)
        out = lb.copy()
        mv_rows = np.nonzero(methods == MV)[0]
        if len(mv_rows):
            smooth = self.smooth(lo[mv_rows], hi[mv_rows])
            mv = self.mean_value_bound(lo[mv_rows], hi[mv_rows], mid[mv_rows])
            out[mv_rows] = np.where(smooth, np.maximum(mv, lb[mv_rows]), -np.inf)
        t2_rows = np.nonzero(methods == TAYLOR2)[0]
        if len(t2_rows):
            smooth = self.smooth(lo[t2_rows], hi[t2_rows])
            t2 = self.taylor2_bound(lo[t2_rows], hi[t2_rows], mid[t2_rows])
            out[t2_rows] = np.where(smooth, np.maximum(t2, lb[t2_rows]), -np.inf)
        tube_rows = np.nonzero(methods == TUBE)[0]
        if len(tube_rows):
            best = np.full(len(tube_rows), -np.inf)
            for gi in range(len(self.groups)):
                hl, hh = self.tube_hull(lo[tube_rows], hi[tube_rows], self.group_cols[gi])
                tb = self.tube_bound(lo[tube_rows], hi[tube_rows], gi)
                best = np.maximum(best, np.where(self.smooth(hl, hh), tb, -np.inf))
            out[tube_rows] = np.maximum(best, lb[tube_rows])
        for col, c in self.zero_faces:
            rows = np.nonzero(methods == f"{FACE}:{self.names[col]}")[0]
            if len(rows):
                out[rows] = np.maximum(self.face_bound(lo[rows], hi[rows], col, c), lb[rows])
        return out


def _coord_sq_bound(lo, hi, cols) -> np.ndarray:
    """Upper bound of sum_k c_k^2 for c_k = sum_{i<=k} (x_i - mean(x))."""
    m = len(cols)
    total = np.zeros(len(lo))
    for k in range(m - 1):
        clo = np.zeros(len(lo))
        chi = np.zeros(len(lo))
        for pos, c in enumerate(cols):
            a = (1.0 - (k + 1) / m) if pos <= k else -(k + 1) / m
            if a >= 0:
                clo += a * lo[:, c]
                chi += a * hi[:, c]
            else:
                clo += a * hi[:, c]
                chi += a * lo[:, c]
        slack = (np.abs(clo) + np.abs(chi)) * 1e-13
        total += np.maximum((clo - slack) ** 2, (chi + slack) ** 2)
    return total


# ------------------------------------------------------------------- the B&B


def inner_domain(stmt: Statement, delta: float):
    """Binary64 box inside the domain; refutation witnesses are clipped to it."""
    box = stmt.box(delta)
    return (np.array([bt.up_float(box[n][0]) for n in box]),
            np.array([bt.down_float(box[n][1]) for n in box]))


def float_domain(stmt: Statement, delta: float):
    """Binary64 box containing the (delta-shrunk) domain, outward rounded."""
    box = stmt.box(delta)
    names = list(box)
    lo = np.array([bt.down_float(box[n][0]) for n in names])
    hi = np.array([bt.up_float(box[n][1]) for n in names])
    return names, lo, hi


DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"


def split_dim(lo, hi, scale, smear=None) -> int:
    """Largest smear |df/dx_i| * width_i when known, else widest scaled edge."""
    w = (hi - lo) / scale
    if smear is not None and np.all(np.isfinite(smear)) and np.max(smear) > 0:
        return int(np.argmax(np.where(hi > lo, smear, -1.0)))
    return int(np.argmax(w))


def split_point(a: float, b: float) -> float:
    """Midpoint, or the geometric mean for positive edges spanning > 4 octaves."""
    if a > 0 and b > 16 * a:
        m = math.sqrt(a) * math.sqrt(b)
        if a < m < b:
            return m
    return a + (b - a) * 0.5


def box_from_path(path: str, lo0, hi0):
    """Re-derive a box from its path id (pairs of split dimension and side)."""
    lo, hi = np.array(lo0, dtype=float), np.array(hi0, dtype=float)
    for k in range(0, len(path), 2):
        d = DIGITS.index(path[k])
        m = split_point(lo[d], hi[d])
        if path[k + 1] == "0":
            hi[d] = m
        else:
            lo[d] = m
    return lo, hi


def _scale(lo, hi):
    s = hi - lo
    return np.where(s > 0, s, np.inf)


def _in_tube(lo, hi, cols_list, delta_eq) -> np.ndarray:
    """Rows whose box meets {max_i x_i - min_i x_i <= delta_eq} for some group."""
    out = np.zeros(len(lo), dtype=bool)
    for cols in cols_list:
        out |= (np.max(lo[:, cols], axis=1) - np.min(hi[:, cols], axis=1)) <= delta_eq
    return out


def certify(stmt: Statement, cfg: ProverConfig = ProverConfig(), *, faces: bool | None = None):
    """Certify ``stmt`` (parameters pinned or treated as box dimensions).

    Returns a :class:`Certificate`, :class:`Refutation` or
    :class:`Inconclusive`.
    """
    t0 = time.perf_counter()
    target = stmt.target
    names, lo0, hi0 = float_domain(stmt, cfg.delta)
    inner = inner_domain(stmt, cfg.delta)
    var_names = [b.name for b in stmt.vars]
    domains = {n: (float(lo0[i]), float(hi0[i])) for i, n in enumerate(names)}
    groups = detect_groups(target, names, domains, var_names) if cfg.tube else []
    faces0 = detect_zero_faces(target, names, domains) if cfg.tube else []
    bounder = Bounder(target, names, groups, cfg.mean_value, cfg.tube, cfg.jobs, faces0, domains)
    result = _branch_and_bound(stmt.id, target, bounder, names, lo0, hi0, cfg, t0, inner)
    if isinstance(result, Certificate):
        result.groups = groups
        cols = [[names.index(g) for g in grp] for grp in groups]
        if groups:
            lo = np.array([b.lo for b in result.boxes])
            hi = np.array([b.hi for b in result.boxes])
            bounds = np.array([b.bound for b in result.boxes])
            outside = ~_in_tube(lo, hi, cols, cfg.delta_eq)
            result.strict_outside_tube = bool(np.all(bounds[outside] >= 0))
        else:
            result.strict_outside_tube = bool(result.min_bound >= 0)
        if cfg.faces if faces is None else faces:
            result.faces = face_checks(stmt, cfg)
        result.wall_time = time.perf_counter() - t0
    return result


def _branch_and_bound(sid, target, bounder: Bounder, names, lo0, hi0, cfg: ProverConfig, t0,
                      inner=None):
    scale = _scale(lo0, hi0)
    heap: list = [(-math.inf, "", 0, lo0, hi0)]
    leaves: list[BoxRecord] = []
    processed = 0
    deepest = 0
    while heap:
        take = min(cfg.batch, len(heap))
        items = [heapq.heappop(heap) for _ in range(take)]
        lo = np.array([it[3] for it in items])
        hi = np.array([it[4] for it in items])
        lb, method, ub, mid, mhi, smear = bounder.bound(lo, hi)
        processed += take
        # a box whose enclosure (or the enclosure at its midpoint) is negative
        bad = np.nonzero((ub < 0) | (mhi < 0))[0]
        if len(bad):
            ref = _refute(sid, target, names, lo, hi, mid, bad, mhi, cfg, inner)
            if ref is not None:
                return ref
        for i, it in enumerate(items):
            path, depth = it[1], it[2]
            deepest = max(deepest, depth)
            if lb[i] >= -cfg.eps:
                leaves.append(BoxRecord(path, tuple(lo[i]), tuple(hi[i]), float(lb[i]), method[i]))
                continue
            if depth >= cfg.max_depth:
                return _inconclusive(sid, "max depth reached", names, lo[i], hi[i], lb[i],
                                     processed, deepest, t0)
            d = split_dim(lo[i], hi[i], scale, smear[i])
            m = split_point(lo[i][d], hi[i][d])
            if not lo[i][d] < m < hi[i][d]:
                return _inconclusive(sid, "box cannot be split further", names, lo[i], hi[i],
                                     lb[i], processed, deepest, t0)
            left_hi = hi[i].copy()
            left_hi[d] = m
            right_lo = lo[i].copy()
            right_lo[d] = m
            heapq.heappush(heap, (float(lb[i]), path + DIGITS[d] + "0", depth + 1, lo[i], left_hi))
            heapq.heappush(heap, (float(lb[i]), path + DIGITS[d] + "1", depth + 1, right_lo, hi[i]))
        if heap and processed >= cfg.max_boxes:
            worst = heap[0]
            return _inconclusive(sid, "box budget exhausted", names, worst[3], worst[4], worst[0],
                                 processed, deepest, t0)
        if heap and cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            worst = heap[0]
            return _inconclusive(sid, "time limit reached", names, worst[3], worst[4], worst[0],
                                 processed, deepest, t0)
    return Certificate(
        statement_id=sid, eps=cfg.eps, names=list(names),
        domain_lo=tuple(lo0), domain_hi=tuple(hi0), boxes=leaves,
        max_depth=deepest, total_boxes=processed, precision=cfg.precision,
        target=ex.render(target), delta_eq=cfg.delta_eq, delta=cfg.delta,
        wall_time=time.perf_counter() - t0,
    )


def _inconclusive(sid, reason, names, lo, hi, bound, processed, deepest, t0):
    box = {n: (float(lo[j]), float(hi[j])) for j, n in enumerate(names)}
    return Inconclusive(sid, reason, box, float(bound), processed, deepest,
                        time.perf_counter() - t0)


def _refute(sid, target, names, lo, hi, mid, bad, mhi, cfg: ProverConfig,
            inner=None) -> Refutation | None:
    from powexp.hunter import polish_violation

    ilo, ihi = inner if inner is not None else (lo.min(axis=0), hi.max(axis=0))
    order = sorted(bad, key=lambda i: (float(mhi[i]), tuple(mid[i])))
    for i in order[:4]:
        blo = np.clip(lo[i], ilo, ihi)
        bhi = np.clip(hi[i], ilo, ihi)
        start = {n: float(np.clip(mid[i][j], blo[j], bhi[j])) for j, n in enumerate(names)}
        box = {n: (float(blo[j]), float(bhi[j])) for j, n in enumerate(names)}
        point = polish_violation(target, names, box, start)
        for cand in (point, start):
            ref = make_refutation(sid, target, cand, 2 * cfg.precision)
            if ref is not None:
                return ref
    return None


# ------------------------------------------------------------- lower_bound


def lower_bound(e: ex.Expr, box: dict, mean_value: bool = True, precision: int = 96):
    """Valid lower bound of ``e`` over ``box`` at ``precision`` bits.

    ``box`` maps names to (lo, hi) pairs; returns the larger of the plain
    interval bound and (if enabled) the mean-value form bound.
    """
    names = sorted(box)
    ivs = {n: Interval(box[n][0], box[n][1], prec=precision) for n in names}
    plain = ex.eval_interval(e, ivs, precision).lo
    if not mean_value or not names:
        return plain
    mid_pt = {n: ivs[n].mid() for n in names}
    mid_box = {n: Interval(mid_pt[n], mid_pt[n], prec=precision) for n in names}
    if any(_touches_zero_base(e, ivs, precision)):
        return plain
    try:
        acc = ex.eval_interval(e, mid_box, precision)
        for n in names:
            g = ex.eval_interval(ex.differentiate(e, n), ivs, precision)
            d = _offset(ivs[n], mid_pt[n], precision)
            acc = acc + g * d
    except ex.EvalDomainError:
        return plain
    return max(plain, acc.lo)


def _offset(iv: Interval, m, precision: int) -> Interval:
    from powexp.interval import iv_sub
    return iv_sub(iv, Interval(m, m, prec=precision))


def _touches_zero_base(e: ex.Expr, ivs: dict, precision: int):
    for n in ex.postorder([e]):
        if n.op == "pow" and not (n.args[1].is_const and n.args[1].value.denominator == 1):
            try:
                yield ex.eval_interval(n.args[0], ivs, precision).lo <= 0
            except ex.EvalDomainError:
                yield True


# ------------------------------------------------------------------- faces


def face_checks(stmt: Statement, cfg: ProverConfig) -> list[dict]:
    """Check each open endpoint face using the 0-power convention.

    Only faces at a finite open endpoint are visited; the face statement has
    that variable pinned to the endpoint and is bounded with plain interval
    evaluation (the target may be discontinuous there).
    """
    out = []
    for b in stmt.vars:
        for side, is_open in (("lo", b.lo_open), ("hi", b.hi_open)):
            if not is_open:
                continue
            value = b.lo if side == "lo" else b.hi
            pinned = ex.substitute(stmt.target, {b.name: value})
            rest = [v for v in stmt.dims() if v.name != b.name]
            if not rest:
                try:
                    v = ex.eval_interval(pinned, {}, cfg.precision)
                    status = "holds" if v.lo >= -cfg.eps else ("fails" if v.hi < 0 else "inconclusive")
                    lowest = float(v.lo)
                except ex.EvalDomainError:
                    status, lowest = "domain-error", -math.inf
                out.append({"var": b.name, "value": ex.render(value), "status": status,
                            "min_bound": fstr(lowest)})
                continue
            sub_stmt = Statement(f"{stmt.id}@{b.name}={ex.render(value)}", pinned, ex.ZERO,
                                 "nonneg", tuple(v for v in stmt.vars if v.name != b.name),
                                 stmt.params)
            sub_cfg = ProverConfig(eps=cfg.eps, max_depth=cfg.max_depth,
                                   max_boxes=cfg.face_max_boxes, precision=cfg.precision,
                                   mean_value=False, tube=False, delta=cfg.delta,
                                   jobs=cfg.jobs, batch=cfg.batch, faces=False)
            try:
                res = certify(sub_stmt, sub_cfg, faces=False)
            except ex.EvalDomainError:
                out.append({"var": b.name, "value": ex.render(value), "status": "domain-error",
                            "min_bound": "-inf"})
                continue
            if isinstance(res, Certificate):
                status, lowest = "holds", res.min_bound
            elif isinstance(res, Refutation):
                status, lowest = "fails", -math.inf
            else:
                status, lowest = "inconclusive", res.worst_bound
            out.append({"var": b.name, "value": ex.render(value), "status": status,
                        "min_bound": fstr(lowest)})
    return out


# ------------------------------------------------------------------ replay


@dataclass
class ReplayReport:
    ok: bool
    checks: dict
    failures: list

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": dict(sorted(self.checks.items())),
                "failures": self.failures[:20]}


def _tiling_errors(paths: list[str]) -> list[str]:
    """Paths must be the leaves of a full binary split tree.

    Every internal node splits one dimension into exactly two children, so
    the leaves are prefix-free and their 2^-depth weights sum to one.
    """
    errors = []

    def walk(prefix: str, items: list[str]):
        if items == [prefix]:
            return
        rest = [p for p in items if p != prefix]
        if len(rest) != len(items):
            errors.append(f"path {prefix or '<root>'} is both a leaf and a split")
            return
        dims = {p[len(prefix)] for p in rest}
        if len(dims) != 1:
            errors.append(f"node {prefix or '<root>'} split along several dimensions")
            return
        d = dims.pop()
        for side in "01":
            child = prefix + d + side
            sub = [p for p in rest if p.startswith(child)]
            if not sub:
                errors.append(f"missing subtree {child}")
                continue
            walk(child, sub)

    if not paths:
        return ["no boxes"]
    if len(set(paths)) != len(paths):
        return ["duplicate paths"]
    if any(len(p) % 2 for p in paths):
        return ["malformed path"]
    import sys
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * max(len(p) for p in paths) + 100))
    try:
        walk("", sorted(paths))
    finally:
        sys.setrecursionlimit(limit)
    return errors


def replay(cert: Certificate, stmt: Statement, spot_checks: int = 64,
           cfg: ProverConfig | None = None) -> ReplayReport:
    """Independently re-check a certificate against its statement.

    Checks that the domain matches, that every box is re-derivable from its
    path, that the boxes tile the domain, that each recorded method still
    gives a bound >= -eps, and that no recorded bound exceeds a high
    precision point value of the target inside its box.
    """
    checks: dict = {}
    failures: list = []
    target = stmt.target
    names, lo0, hi0 = float_domain(stmt, cert.delta)
    checks["domain"] = (names == list(cert.names) and np.array_equal(lo0, cert.domain_lo)
                        and np.array_equal(hi0, cert.domain_hi))
    if not checks["domain"]:
        failures.append("domain does not match the statement")
        return ReplayReport(False, checks, failures)
    checks["target"] = ex.render(target) == cert.target
    if not checks["target"]:
        failures.append("target expression differs")

    boxes = sorted(cert.boxes, key=lambda b: b.path)
    lo = np.array([b.lo for b in boxes], dtype=float).reshape(len(boxes), len(names))
    hi = np.array([b.hi for b in boxes], dtype=float).reshape(len(boxes), len(names))
    bad_paths = 0
    for i, b in enumerate(boxes):
        plo, phi = box_from_path(b.path, lo0, hi0)
        if not (np.array_equal(plo, lo[i]) and np.array_equal(phi, hi[i])):
            bad_paths += 1
            if bad_paths <= 5:
                failures.append(f"box {b.path or '<root>'} does not match its path")
    checks["paths"] = bad_paths == 0

    tiling = _tiling_errors([b.path for b in boxes])
    checks["tiling"] = not tiling
    failures.extend(tiling[:5])
    width = np.where(hi0 > lo0, hi0 - lo0, 1.0)
    vol = math.fsum(np.prod(np.where(hi0 > lo0, (hi - lo) / width, 1.0), axis=1))
    checks["volume"] = abs(vol - 1.0) <= 1e-12
    if not checks["volume"]:
        failures.append(f"relative covered volume {vol!r} != 1")

    cfg = cfg or ProverConfig()
    domains = {n: (float(lo0[i]), float(hi0[i])) for i, n in enumerate(names)}
    var_names = [b.name for b in stmt.vars]
    groups = [list(g) for g in cert.groups]
    methods = np.array([b.method for b in boxes], dtype=object)
    uses_tube = bool(np.any(methods == TUBE))
    faces0 = []
    if uses_tube or any(str(m).startswith(FACE) for m in methods):
        redetected = detect_groups(target, names, domains, var_names)
        checks["groups"] = sorted(map(sorted, redetected)) == sorted(map(sorted, groups))
        if not checks["groups"]:
            failures.append("equality groups differ from the recorded ones")
        faces0 = detect_zero_faces(target, names, domains)
    bounder = Bounder(target, names, groups, True, True, cfg.jobs, faces0, domains)
    lb = np.empty(len(boxes))
    for s in range(0, len(boxes), cfg.batch):
        lb[s:s + cfg.batch] = bounder.replay_bound(lo[s:s + cfg.batch], hi[s:s + cfg.batch],
                                                   methods[s:s + cfg.batch])
    low = np.nonzero(~(lb >= -cert.eps))[0]
    checks["bounds"] = len(low) == 0
    for i in low[:5]:
        failures.append(f"box {boxes[i].path} replays to {lb[i]!r} < -eps")

    rng = np.random.default_rng(len(boxes))
    picks = sorted(set(rng.choice(len(boxes), size=min(spot_checks, len(boxes)), replace=False)))
    worst = sorted(range(len(boxes)), key=lambda i: boxes[i].bound)[:spot_checks // 4]
    sound = True
    for i in sorted(set(picks) | set(worst)):
        u = rng.random(len(names))
        point = {n: float(lo[i][j] + u[j] * (hi[i][j] - lo[i][j])) for j, n in enumerate(names)}
        try:
            value = ex.eval_point(target, point, 2 * cert.precision)
        except (ex.EvalDomainError, ZeroDivisionError, ValueError):
            continue
        if value < boxes[i].bound:
            sound = False
            failures.append(f"box {boxes[i].path}: value {float(value)!r} below recorded bound")
    checks["spot"] = sound
    return ReplayReport(all(checks.values()), checks, failures)

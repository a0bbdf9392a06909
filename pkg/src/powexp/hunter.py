"""Counterexample search and stationary-point auditing.

Search is two-phase: Nelder-Mead in binary64 from many starts, then
saddle-free Newton steps on the symbolic gradient at high precision.
Starts are scrambled Sobol points plus samples biased toward the diagonal
of variables that share a domain (where equality manifolds sit).  Every
start has its own RNG stream derived from (seed, start index), so results do
not depend on how starts are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import minimize as nm_minimize
from scipy.stats import qmc

from powexp import batch as bt
from powexp import expr as ex
from powexp.certs import NotFound, Refutation, fstr, make_refutation
from powexp.interval import Interval
from powexp.statement import Statement

INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class HuntConfig:
    starts: int = 256
    seed: int = 0
    max_iter: int = 600
    precision: int = 96
    clip_delta: float = 1e-9
    polish: int = 6
    newton_steps: int = 25
    diagonal_fraction: float = 0.5
    tube_radius: float = 0.05
    jobs: int = 1

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("starts must be >= 1")


@dataclass
class MinResult:
    point: dict
    value: object  # mpf at cfg.precision
    status: str
    boundary: list = field(default_factory=list)
    grad_norm: float = math.nan
    starts: int = 0

    def float_point(self) -> dict:
        return {k: float(v) for k, v in self.point.items()}


# ------------------------------------------------------------------ starts


def _starts(box: dict, names: list[str], cfg: HuntConfig, diag_cols: list[int]):
    lo = np.array([box[n][0] for n in names], dtype=float)
    hi = np.array([box[n][1] for n in names], dtype=float)
    d = len(names)
    n_diag = int(round(cfg.starts * cfg.diagonal_fraction)) if len(diag_cols) > 1 else 0
    n_lds = cfg.starts - n_diag
    out = []
    if n_lds:
        sob = qmc.Sobol(d, scramble=True, seed=np.random.default_rng([cfg.seed, 0x5EED]))
        u = sob.random(n_lds)
        out.extend(lo + u * (hi - lo))
    for k in range(n_diag):
        rng = np.random.default_rng([cfg.seed, n_lds + k])
        x = lo + rng.random(d) * (hi - lo)
        dlo, dhi = lo[diag_cols[0]], hi[diag_cols[0]]
        if k % 2 == 0 and dlo < INV_E < dhi:
            t = INV_E + rng.normal(0.0, 0.03) * (dhi - dlo)
        else:
            t = dlo + rng.random() * (dhi - dlo)
        spread = 0.02 * (dhi - dlo)
        x[diag_cols] = t + rng.normal(0.0, spread, len(diag_cols))
        out.append(np.clip(x, lo, hi))
    return out, lo, hi


def diagonal_columns(names: list[str], box: dict, candidates: list[str]) -> list[int]:
    """Columns of the largest set of candidate variables sharing one domain."""
    by_dom: dict = {}
    for n in candidates:
        by_dom.setdefault(box[n], []).append(names.index(n))
    return max(by_dom.values(), key=len, default=[])


# ---------------------------------------------------------------- phase one


def _local(fun, x0, lo, hi, max_iter):
    res = nm_minimize(fun, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                      options={"maxiter": max_iter * len(x0), "xatol": 1e-12, "fatol": 1e-15,
                               "adaptive": len(x0) > 3})
    x = np.clip(res.x, lo, hi)
    return float(fun(x)), tuple(float(v) for v in x)


def _objective(prog: bt.Program):
    f = prog.scalar()

    def fun(x):
        try:
            v = f(*x)[0]
        except (ZeroDivisionError, OverflowError, ValueError):
            return math.inf
        return math.inf if v != v else v

    return fun


def _float_search(prog, starts, lo, hi, cfg: HuntConfig):
    fun = _objective(prog)

    def run(x0):
        return _local(fun, np.asarray(x0, dtype=float), lo, hi, cfg.max_iter)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            found = list(pool.map(run, starts))
    else:
        found = [run(x0) for x0 in starts]
    return found


def _distinct_best(found, k: int):
    """The k best local minima (ties broken lexicographically), deduplicated."""
    found = sorted((v, x) for v, x in found if math.isfinite(v))
    out = []
    for v, x in found:
        if all(max(abs(a - b) for a, b in zip(x, y)) > 1e-7 for _, y in out):
            out.append((v, x))
        if len(out) >= k:
            break
    return out


# ---------------------------------------------------------------- phase two


class _Polisher:
    def __init__(self, e: ex.Expr, names: list[str]):
        self.e = e
        self.names = names
        self.grad = ex.gradient(e, names)
        self._hess = None

    @property
    def hess(self):
        if self._hess is None:
            self._hess = ex.hessian(self.e, self.names)
        return self._hess

    def value(self, point, prec):
        return ex.eval_point(self.e, point, prec)

    def newton(self, x: dict, lo, hi, prec: int, steps: int):
        names = self.names
        with mpmath.workprec(prec + 16):
            lo_m = [mpmath.mpf(v) for v in lo]
            hi_m = [mpmath.mpf(v) for v in hi]
            cur = {n: mpmath.mpf(x[n]) for n in names}
            try:
                fcur = self.value(cur, prec)
            except ex.EvalDomainError:
                return cur, None
            gnorm = None
            for _ in range(steps):
                free = [i for i, n in enumerate(names)
                        if lo_m[i] + mpmath.mpf(2) ** -40 < cur[n] < hi_m[i] - mpmath.mpf(2) ** -40]
                if not free:
                    break
                try:
                    g = [ex.eval_point(self.grad[i], cur, prec) for i in free]
                    H = mpmath.matrix(len(free))
                    for a, i in enumerate(free):
                        for b, j in enumerate(free[a:], a):
                            H[a, b] = H[b, a] = ex.eval_point(self.hess[i][j], cur, prec)
                except ex.EvalDomainError:
                    break
                gnorm = mpmath.sqrt(sum(v * v for v in g))
                if gnorm < mpmath.mpf(2) ** (-prec + 8):
                    break
                lam, Q = mpmath.eigsy(H)
                top = max(abs(v) for v in lam) or 1
                step = [mpmath.mpf(0)] * len(free)
                for k in range(len(free)):
                    if abs(lam[k]) <= top * mpmath.mpf(2) ** (-prec // 2):
                        continue
                    qg = sum(Q[a, k] * g[a] for a in range(len(free)))
                    for a in range(len(free)):
                        step[a] -= Q[a, k] * qg / abs(lam[k])
                t = mpmath.mpf(1)
                moved = False
                for _ in range(30):
                    trial = dict(cur)
                    for a, i in enumerate(free):
                        v = cur[names[i]] + t * step[a]
                        trial[names[i]] = min(max(v, lo_m[i]), hi_m[i])
                    try:
                        ft = self.value(trial, prec)
                    except ex.EvalDomainError:
                        ft = None
                    if ft is not None and ft <= fcur:
                        moved = ft < fcur or t == 1
                        cur, fcur = trial, ft
                        break
                    t /= 2
                if not moved:
                    break
            return cur, gnorm


def _boundary(point: dict, box: dict, tol: float = 1e-9) -> list[str]:
    out = []
    for n, v in point.items():
        lo, hi = box[n]
        if abs(float(v) - lo) <= tol * max(1.0, abs(lo)) or abs(float(v) - hi) <= tol * max(1.0, abs(hi)):
            out.append(n)
    return out


def _as_box(box: dict) -> dict:
    return {n: (float(a), float(b)) for n, (a, b) in box.items()}


def minimize(e: ex.Expr, box: dict, cfg: HuntConfig = HuntConfig(), *, candidates=None,
             names=None) -> MinResult:
    """Global-leaning minimization of ``e`` over a box of (lo, hi) pairs.

    The returned value is evaluated at ``cfg.precision`` bits at the returned
    point; ``status`` is ``converged`` (small gradient or boundary point),
    ``stalled`` or ``failed``.
    """
    box = _as_box(box)
    names = list(names or sorted(box))
    cand = list(candidates) if candidates is not None else names
    runs = _phase_one(e, box, names, cand, cfg)
    if not runs:
        return MinResult({}, mpmath.inf, "failed", starts=cfg.starts)
    return _polish_best(e, box, names, runs, cfg)


def _phase_one(e, box, names, cand, cfg, starts=None):
    prog = bt.Program([e], names)
    diag = diagonal_columns(names, box, cand)
    if starts is None:
        starts, lo, hi = _starts(box, names, cfg, diag)
    else:
        lo = np.array([box[n][0] for n in names])
        hi = np.array([box[n][1] for n in names])
    found = _float_search(prog, starts, lo, hi, cfg)
    return _distinct_best(found, cfg.polish)


def _polish_best(e, box, names, runs, cfg: HuntConfig) -> MinResult:
    pol = _Polisher(e, names)
    lo = [box[n][0] for n in names]
    hi = [box[n][1] for n in names]
    best = None
    for v0, x in runs:
        start = dict(zip(names, x))
        point, gnorm = pol.newton(start, lo, hi, cfg.precision, cfg.newton_steps)
        try:
            val = pol.value(point, cfg.precision)
        except ex.EvalDomainError:
            continue
        key = (val, tuple(point[n] for n in names))
        if best is None or key < best[0]:
            best = (key, point, gnorm)
    if best is None:
        return MinResult({}, mpmath.inf, "failed", starts=cfg.starts)
    (val, _), point, gnorm = best
    bnd = _boundary(point, box)
    small = gnorm is not None and gnorm < mpmath.mpf(2) ** (-cfg.precision // 2)
    status = "converged" if (small or bnd) else "stalled"
    with mpmath.workprec(cfg.precision):
        point = {n: +point[n] for n in names}
    return MinResult(point, val, status, bnd, float(gnorm) if gnorm is not None else math.nan,
                     cfg.starts)


# --------------------------------------------------------------- violations


def hunt_box(stmt: Statement, delta: float) -> tuple[list[str], dict]:
    """Binary64 box inside the domain, so every float point found is admissible."""
    box = stmt.box(delta)
    names = list(box)
    return names, {n: (bt.up_float(box[n][0]), bt.down_float(box[n][1])) for n in names}


def find_violation(stmt: Statement, cfg: HuntConfig = HuntConfig(), **params):
    """Search for a verified counterexample.

    Near-manifold search runs first: diagonal-biased starts with descent
    confined to a cube of half-width ``tube_radius`` around each start, which
    finds the smallest perturbations of an equality manifold that break the
    statement.  A free search over the whole box follows.  Returns a
    :class:`Refutation` verified at twice ``cfg.precision``, or
    :class:`NotFound` with the best point seen.
    """
    if params:
        stmt = stmt.instantiate(**params)
    target = stmt.target
    names, box = hunt_box(stmt, cfg.clip_delta)
    cand = [b.name for b in stmt.vars]
    best_nf = None
    for phase in ("tube", "free"):
        runs = _violation_phase(target, box, names, cand, cfg, phase)
        for v, x in runs:
            if best_nf is None or (v, x) < best_nf:
                best_nf = (v, x)
        if not runs or min(v for v, _ in runs) >= 0:
            continue
        ref = _verify_runs(stmt.id, target, names, box, runs, cfg)
        if ref is not None:
            return ref
    if best_nf is None:
        return NotFound(stmt.id, {}, math.inf, cfg.starts)
    v, x = best_nf
    return NotFound(stmt.id, {n: fstr(c) for n, c in zip(names, x)}, v, cfg.starts)


def _violation_phase(target, box, names, cand, cfg: HuntConfig, phase: str):
    diag = diagonal_columns(names, box, cand)
    if phase == "tube":
        return _tube_phase(target, box, names, diag, cfg) if len(diag) > 1 else []
    return _phase_one(target, box, names, cand, cfg)


def _transverse_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the vectors in R^m whose entries sum to zero."""
    diffs = np.zeros((m, m - 1))
    for k in range(m - 1):
        diffs[k, k], diffs[k + 1, k] = 1.0, -1.0
    q, _ = np.linalg.qr(diffs)
    return q


def _tube_phase(target, box, names, diag, cfg: HuntConfig):
    """Probe the diagonal of ``diag`` for negative transverse curvature.

    The lowest eigenvalue of the Hessian restricted to directions leaving the
    diagonal is minimized over the diagonal (and the remaining coordinates).
    Where it is negative, stepping along its eigenvector by a small amount
    gives the smallest perturbation of the manifold that breaks the
    statement.  Step lengths grow geometrically up to ``tube_radius``.
    """
    d = len(names)
    lo = np.array([box[n][0] for n in names], dtype=float)
    hi = np.array([box[n][1] for n in names], dtype=float)
    dlo, dhi = lo[diag[0]], hi[diag[0]]
    hess = ex.hessian(target, names)
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    hprog = bt.Program([hess[i][j] for i, j in pairs], names)
    fun = _objective(bt.Program([target], names))
    Q = _transverse_basis(len(diag))
    others = [i for i in range(d) if i not in diag]

    def embed(y):
        x = np.empty(d)
        x[diag] = y[0]
        x[others] = y[1:]
        return x

    def curvature(rows):
        vals = hprog.point(rows)
        out = []
        for row in vals:
            H = np.empty((d, d))
            for (i, j), v in zip(pairs, row):
                H[i, j] = H[j, i] = v
            M = Q.T @ H[np.ix_(diag, diag)] @ Q
            if not np.all(np.isfinite(M)):
                out.append((math.inf, None))
                continue
            w, V = np.linalg.eigh(M)
            out.append((float(w[0]), Q @ V[:, 0]))
        return out

    ylo = np.concatenate([[dlo], lo[others]])
    yhi = np.concatenate([[dhi], hi[others]])
    sob = qmc.Sobol(len(ylo), scramble=True, seed=np.random.default_rng([cfg.seed, 0x7B]))
    ys = ylo + sob.random(cfg.starts) * (yhi - ylo)
    lam = [c[0] for c in curvature(np.array([embed(y) for y in ys]))]
    order = sorted(range(len(ys)), key=lambda k: (lam[k], tuple(ys[k])))

    def lam_of(y):
        return curvature(embed(np.clip(y, ylo, yhi))[None, :])[0][0]

    probes = []
    for k in order[:cfg.polish]:
        if not lam[k] < 0:
            break
        _, y = _local(lam_of, ys[k], ylo, yhi, cfg.max_iter)
        x0 = embed(np.array(y))
        lam0, v = curvature(x0[None, :])[0]
        if not lam0 < 0:
            continue
        for step in cfg.tube_radius * 2.0 ** -np.arange(10, -1, -1):
            hit = None
            for sign in (1.0, -1.0):
                x = x0.copy()
                x[diag] += sign * step * v
                x = np.clip(x, lo, hi)
                val = fun(x)
                if val < -1e-10:
                    hit = (val, tuple(float(c) for c in x))
                    break
            if hit is not None:
                probes.append(hit)
                break
    return probes


def _verify_runs(sid, target, names, box, runs, cfg: HuntConfig) -> Refutation | None:
    for v, x in runs:
        if v >= 0:
            break
        point = dict(zip(names, x))
        ref = make_refutation(sid, target, point, 2 * cfg.precision)
        if ref is not None:
            return ref
    return None


def polish_violation(target: ex.Expr, names: list[str], box: dict, start: dict) -> dict:
    """Short float descent from ``start`` inside ``box``; returns a float point."""
    prog = bt.Program([target], names)
    fun = _objective(prog)
    lo = np.array([box[n][0] for n in names])
    hi = np.array([box[n][1] for n in names])
    x0 = np.array([start[n] for n in names])
    v, x = _local(fun, x0, lo, hi, 200)
    if not v < fun(x0):
        return dict(start)
    return dict(zip(names, x))


# --------------------------------------------------------------- stationary


@dataclass
class StationaryReport:
    grad_norm: object
    gradient: list
    eigenvalues: list
    signs: list  # "+", "-", or "0?" when not certified
    certified: list
    determinant: object

    @property
    def pattern(self) -> str:
        return "".join(self.signs)


def check_stationary(e: ex.Expr, point: dict, tol: float = 1e-20, precision: int = 96,
                     names: list[str] | None = None) -> StationaryReport:
    """Gradient norm and Hessian eigen-signs at ``point``.

    An eigenvalue sign is certified when |lambda| exceeds both ``tol`` and
    the Frobenius norm of the radius of an interval enclosure of the Hessian
    at the point (Weyl's perturbation bound).  Entries of ``point`` not in
    ``names`` are held fixed.
    """
    names = list(names or sorted(point))
    grad = ex.gradient(e, names)
    hess = ex.hessian(e, names)
    with mpmath.workprec(precision):
        g = [ex.eval_point(d, point, precision) for d in grad]
        gnorm = mpmath.sqrt(mpmath.fsum(v * v for v in g))
        n = len(names)
        H = mpmath.matrix(n)
        rad2 = mpmath.mpf(0)
        box = {k: _point_interval(v, precision) for k, v in point.items()}
        for i in range(n):
            for j in range(i, n):
                H[i, j] = H[j, i] = ex.eval_point(hess[i][j], point, precision)
                iv = ex.eval_interval(hess[i][j], box, precision)
                r = iv.width / 2  # width is rounded up; halving is exact
                rad2 += r * r * (1 if i == j else 2)
        lam, _ = mpmath.eigsy(H)
        lam = sorted(lam[k] for k in range(n))
        rad = mpmath.sqrt(rad2) * (1 + mpmath.ldexp(1, 8 - precision))  # covers rounding
        signs, cert = [], []
        for v in lam:
            ok = abs(v) > tol and abs(v) > rad
            cert.append(bool(ok))
            signs.append(("+" if v > 0 else "-") if ok else "0?")
        det = mpmath.det(H)
    return StationaryReport(gnorm, g, lam, signs, cert, det)


def _point_interval(v, precision: int) -> Interval:
    if isinstance(v, ex.Expr):
        return ex.eval_interval(v, {}, precision)
    return Interval(v, v, prec=precision)

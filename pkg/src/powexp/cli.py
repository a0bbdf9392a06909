"""Command-line front end: list, verify, hunt, check, replay and sweep.

Exit codes: 0 when the outcome matches the catalog's expectation (a verified
refutation of an open or externally proved entry is reported with
``"finding": true`` and still exits 0), 1 for usage or domain errors, 2 for a
refutation of an entry proved in the source or a failed replay, 3 for an
inconclusive run where a proof was expected.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import mpmath

from powexp import catalog, certs, claims
from powexp import expr as ex
from powexp.certs import Certificate, Inconclusive, NotFound, Refutation, canonical_json, fstr
from powexp.hunter import HuntConfig, find_violation, hunt_box, minimize
from powexp.prover import ProverConfig, certify, replay

EXIT_OK, EXIT_USAGE, EXIT_REGRESSION, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def tool_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "0+unknown"


@dataclass
class RunReport:
    statement: str
    mode: str
    config: dict
    result: dict
    status: str
    precision: int
    finding: bool = False
    reference: str | None = None  # sha256 of the canonical result
    version: str = field(default_factory=tool_version)
    runtime_ms: float = 0.0  # kept out of the canonical form

    def __post_init__(self):
        if self.reference is None:
            self.reference = hashlib.sha256(canonical_json(self.result).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"statement": self.statement, "mode": self.mode, "config": self.config,
                "result": self.result, "status": self.status,
                "precision": {"bits": self.precision}, "finding": self.finding,
                "reference": self.reference, "version": self.version}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def timing(self) -> dict:
        return {"sha256": self.digest(), "runtime_ms": f"{self.runtime_ms:.3f}"}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["statement"], d["mode"], dict(d["config"]), dict(d["result"]), d["status"],
                   int(d["precision"]["bits"]), bool(d.get("finding", False)),
                   d.get("reference"), d.get("version", ""))


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output


def write_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    if not directory.is_dir():
        raise UsageError(f"output directory {directory} does not exist")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_writable(path: str | None) -> None:
    if path is None:
        return
    directory = Path(path).parent if str(Path(path).parent) else Path(".")
    if not directory.is_dir() or not os.access(directory, os.W_OK):
        raise UsageError(f"cannot write to {path}")


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, report: RunReport | None, text: str) -> None:
    if args.out:
        write_atomic(args.out, text + ("" if text.endswith("\n") else "\n"))
        if report is not None:
            write_atomic(args.out + ".timing.json", canonical_json(report.timing()) + "\n")
    else:
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))


def _report_text(args, report: RunReport) -> str:
    if args.format == "csv":
        row = [report.statement, report.mode, report.status, str(report.finding).lower(),
               report.result.get("kind", ""), _headline(report.result)]
        return _csv_text(["statement", "mode", "status", "finding", "kind", "value"], [row])
    return report.to_json()


def _headline(result: dict) -> str:
    for key in ("min_bound", "value", "worst_bound", "best_value"):
        if result.get(key) is not None:
            return str(result[key])
    return ""


# ----------------------------------------------------------------- parsing


def parse_n(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if lo > hi:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise UsageError(f"--n expects an integer or lo..hi, got {text!r}") from None


def _number(text: str):
    text = text.strip()
    if text == "e":
        return mpmath.e
    try:
        return mpmath.mpf(text)
    except (ValueError, TypeError):
        raise UsageError(f"not a number: {text!r}") from None


def parse_grid(text: str) -> list[str]:
    """``lo:hi:count`` to ``count`` evenly spaced pin values (strings)."""
    parts = text.split(":")
    if len(parts) == 1:
        _number(parts[0])
        return [parts[0].strip()]
    if len(parts) == 2:
        return [text]
    if len(parts) != 3:
        raise UsageError(f"expected value, lo:hi or lo:hi:count, got {text!r}")
    try:
        count = int(parts[2])
    except ValueError:
        raise UsageError(f"grid count must be an integer, got {parts[2]!r}") from None
    if count < 1:
        raise UsageError("grid count must be >= 1")
    lo_s, hi_s = parts[0].strip(), parts[1].strip()
    lo, hi = _number(lo_s), _number(hi_s)
    if count == 1:
        return [lo_s]
    out = []
    for i in range(count):
        if i == 0:
            out.append(lo_s)
        elif i == count - 1:
            out.append(hi_s)
        else:
            out.append(fstr(float(lo + (hi - lo) * i / (count - 1))))
    return out


def _validate_pin(text: str | None, flag: str) -> None:
    if text is None:
        return
    if ":" in text:
        try:
            lo, hi = catalog.parse_range(text)
        except ValueError as err:
            raise UsageError(str(err)) from None
        _number(lo), _number(hi)
    else:
        _number(text)


def _statement(sid: str, n: int | None, r: str | None, k: str | None):
    try:
        return catalog.get(sid, n=n, r=r, k=k)
    except catalog.UnknownStatement:
        raise
    except (ValueError, KeyError) as err:
        raise UsageError(str(err)) from None


def _config_echo(args, **extra) -> dict:
    keys = ("n", "r", "k", "eps", "max_depth", "max_boxes", "precision", "seed", "starts")
    out = {}
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = str(v)
    out.update({k: str(v) for k, v in extra.items() if v is not None})
    return dict(sorted(out.items()))


# ---------------------------------------------------------------- outcomes


def classify(expected: str, result) -> tuple[str, bool, int]:
    """(status, finding, exit code) for a result against the expectation."""
    if isinstance(result, Certificate):
        if expected == "refutation-expected":
            return "unexpected-certificate", False, EXIT_REGRESSION
        return "certified", False, EXIT_OK
    if isinstance(result, Refutation):
        if expected == "proved-in-paper":
            return "refuted", True, EXIT_REGRESSION
        return "refuted", expected != "refutation-expected", EXIT_OK
    if isinstance(result, Inconclusive):
        code = EXIT_INCONCLUSIVE if expected == "proved-in-paper" else EXIT_OK
        return "inconclusive", False, code
    if isinstance(result, NotFound):
        return "not-found", False, EXIT_OK
    raise TypeError(type(result))


def _prover_config(args) -> ProverConfig:
    kw = {}
    for key in ("eps", "max_depth", "max_boxes", "precision", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            kw[key] = v
    if getattr(args, "time_limit", None) is not None:
        kw["time_limit"] = args.time_limit
    return ProverConfig(**kw)


def _hunt_config(args) -> HuntConfig:
    kw = {"seed": args.seed if args.seed is not None else 0}
    if args.precision is not None:
        kw["precision"] = args.precision
    if getattr(args, "starts", None) is not None:
        kw["starts"] = args.starts
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    return HuntConfig(**kw)


def _single_n(args) -> int | None:
    ns = parse_n(args.n)
    if ns is not None and len(ns) != 1:
        raise UsageError("--n takes a single integer for this command")
    return ns[0] if ns else None


# ---------------------------------------------------------------- commands


def cmd_list(args) -> int:
    entries = sorted(catalog.load().values(), key=lambda e: e.id)
    if args.format == "csv":
        rows = [[e.id, e.kind, e.expected, e.anchor] for e in entries]
        text = _csv_text(["id", "kind", "expected", "anchor"], rows)
    else:
        text = canonical_json([{"id": e.id, "kind": e.kind, "expected": e.expected,
                                "anchor": e.anchor, "n": e.n, "alias_of": e.alias_of}
                               for e in entries])
    _emit(args, None, text)
    return EXIT_OK


def cmd_verify(args) -> int:
    entry = catalog.entry(args.id)
    if entry.is_claim:
        raise UsageError(f"{args.id} is a proof claim; use 'check'")
    n = _single_n(args)
    _validate_pin(args.r, "--r")
    _validate_pin(args.k, "--k")
    _check_writable(args.out)
    stmt = _statement(args.id, n, args.r, args.k)
    cfg = _prover_config(args)
    t0 = time.perf_counter()
    result = certify(stmt, cfg)
    status, finding, code = classify(entry.expected, result)
    report = RunReport(args.id, "certify", _config_echo(args, n=n, jobs=None), result.to_dict(),
                       status, cfg.precision, finding)
    report.runtime_ms = (time.perf_counter() - t0) * 1e3
    _emit(args, report, _report_text(args, report))
    _log(args, report)
    return code


def cmd_hunt(args) -> int:
    entry = catalog.entry(args.id)
    if entry.is_claim:
        raise UsageError(f"{args.id} is a proof claim; use 'check'")
    n = _single_n(args)
    _validate_pin(args.r, "--r")
    _validate_pin(args.k, "--k")
    _check_writable(args.out)
    stmt = _statement(args.id, n, args.r, args.k)
    cfg = _hunt_config(args)
    t0 = time.perf_counter()
    result = find_violation(stmt, cfg)
    status, finding, code = classify(entry.expected, result)
    report = RunReport(args.id, "hunt", _config_echo(args, n=n), result.to_dict(), status,
                       cfg.precision, finding)
    report.runtime_ms = (time.perf_counter() - t0) * 1e3
    _emit(args, report, _report_text(args, report))
    _log(args, report)
    return code


def cmd_check(args) -> int:
    if args.id not in claims.CLAIM_IDS:
        catalog.entry(args.id)  # unknown ids raise here
        raise UsageError(f"{args.id} is not a proof claim; use 'verify'")
    _check_writable(args.out)
    kw = {}
    if args.max_boxes is not None:
        kw["max_boxes"] = args.max_boxes
    if args.precision is not None:
        kw["precision"] = args.precision
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.time_limit is not None:
        kw["time_limit"] = args.time_limit
    budget = claims.Budget(**kw)
    t0 = time.perf_counter()
    rep = claims.check_claim(args.id, budget)
    code = EXIT_INCONCLUSIVE if rep.status == claims.INCONCLUSIVE else EXIT_OK
    report = RunReport(args.id, "check", _config_echo(args), rep.to_dict(), rep.status,
                       budget.precision, rep.status == claims.FAILS)
    report.runtime_ms = (time.perf_counter() - t0) * 1e3
    _emit(args, report, _report_text(args, report))
    _log(args, report)
    return code


def load_result(path: str):
    """A certificate or refutation from a result file or a run report."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"{path} is not JSON: {err}") from None
    config = {}
    if "mode" in data and "result" in data:
        config = data.get("config", {})
        data = data["result"]
    try:
        return certs.result_from_dict(data), config
    except (KeyError, ValueError) as err:
        raise UsageError(f"{path}: {err}") from None


def cmd_replay(args) -> int:
    result, config = load_result(args.file)
    sid = args.id or result.statement_id
    n = _single_n(args) if args.n is not None else (int(config["n"]) if "n" in config else None)
    r = args.r if args.r is not None else config.get("r")
    k = args.k if args.k is not None else config.get("k")
    _check_writable(args.out)
    stmt = _statement(sid, n, r, k)
    t0 = time.perf_counter()
    if isinstance(result, Certificate):
        rep = replay(result, stmt, cfg=_prover_config(args))
        ok, detail = rep.ok, rep.to_dict()
        precision = 2 * result.precision
    else:
        precision = args.precision or 2 * result.precision
        ok = ex.render(stmt.target) == result.target and certs.replay_refutation(
            result, stmt.target, precision)
        detail = {"ok": ok, "witness": result.witness}
    report = RunReport(sid, "replay", _config_echo(args, n=n, r=r, k=k),
                       {"kind": result.kind, "replay": detail}, "ok" if ok else "failed",
                       precision, False)
    report.runtime_ms = (time.perf_counter() - t0) * 1e3
    _emit(args, report, _report_text(args, report))
    _log(args, report)
    return EXIT_OK if ok else EXIT_REGRESSION


def cmd_sweep(args) -> int:
    """Hunter minimum of the target on a grid of (n, r) cells."""
    entry = catalog.entry(args.id)
    if entry.is_claim:
        raise UsageError(f"{args.id} is a proof claim")
    ns = parse_n(args.n) or [entry.n]
    rs = parse_grid(args.r) if args.r is not None else [None]
    _check_writable(args.out)
    cfg = _hunt_config(args)
    rows = []
    for n in ns:
        for r in rs:
            stmt = _statement(args.id, n, r, args.k)
            names, box = hunt_box(stmt, cfg.clip_delta)
            res = minimize(stmt.target, box, cfg, candidates=[b.name for b in stmt.vars],
                           names=names)
            value = certs.mpstr(res.value, cfg.precision) if res.point else "inf"
            point = ";".join(f"{k}={fstr(float(v))}" for k, v in sorted(res.point.items()))
            rows.append(["" if n is None else str(n), "" if r is None else r, value,
                         res.status, point])
    header = ["n", "r", "min_gap", "status", "argmin"]
    if args.format == "csv":
        text = _csv_text(header, rows)
    else:
        text = canonical_json({"statement": args.id, "mode": "sweep",
                               "cells": [dict(zip(header, row)) for row in rows]})
    _emit(args, None, text)
    return EXIT_OK


def _log(args, report: RunReport) -> None:
    if not args.quiet:
        flag = " finding" if report.finding else ""
        print(f"{report.statement} {report.mode}: {report.status}{flag} "
              f"({report.runtime_ms:.0f} ms)", file=sys.stderr)


# ------------------------------------------------------------------ parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _eps(text: str) -> float:
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a finite number >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="powexp",
                                description="Certify and refute power-exponential inequalities.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write the report here (atomically)")
    common.add_argument("--quiet", action="store_true")
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--r", help="value, 'e' or lo:hi (sweep: lo:hi:count)")
    run.add_argument("--k", help="value or lo:hi")
    run.add_argument("--n", help="integer (sweep: lo..hi)")
    run.add_argument("--eps", type=_eps)
    run.add_argument("--max-depth", type=_positive_int)
    run.add_argument("--max-boxes", type=_positive_int)
    run.add_argument("--precision", type=_positive_int, help="bits")
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=_positive_int)
    run.add_argument("--starts", type=_positive_int, help="hunter multistart count")
    run.add_argument("--time-limit", type=float, help="seconds")

    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", parents=[common], help="list catalog entries")
    for name, help_ in (("verify", "certify a statement"),
                        ("hunt", "search for a counterexample"),
                        ("check", "check a proof claim"),
                        ("sweep", "hunter minima over an (n, r) grid")):
        sp = sub.add_parser(name, parents=[common, run], help=help_)
        sp.add_argument("id")
    rp = sub.add_parser("replay", parents=[common, run], help="re-verify a result file")
    rp.add_argument("file")
    rp.add_argument("--id", help="statement id (default: from the file)")
    return p


COMMANDS = {"list": cmd_list, "verify": cmd_verify, "hunt": cmd_hunt, "check": cmd_check,
            "replay": cmd_replay, "sweep": cmd_sweep}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except catalog.UnknownStatement as err:
        print(f"error: {err.args[0]}", file=sys.stderr)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
    except ex.EvalDomainError as err:
        print(f"error: domain error: {err}", file=sys.stderr)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

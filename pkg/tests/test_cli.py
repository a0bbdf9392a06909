from __future__ import annotations

import csv
import io
import json

import pytest

from powexp import cli


def run(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_json(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    rows = json.loads(out)
    assert any(r["id"] == "T1_EQ1" for r in rows)


def test_list_csv(capsys):
    code, out, _ = run(capsys, "list", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["id", "kind", "expected", "anchor"]
    assert len(rows) > 25


def test_unknown_statement(capsys):
    code, _, err = run(capsys, "verify", "NO_SUCH_ID")
    assert code == 1 and "NO_SUCH_ID" in err


def test_malformed_flags(capsys):
    assert run(capsys, "verify", "T1_EQ1", "--eps", "abc")[0] == 1
    assert run(capsys, "verify", "T1_EQ1", "--r", "x:y")[0] == 1
    assert run(capsys, "verify", "T1_EQ1", "--r", "5")[0] == 1
    assert run(capsys, "sweep", "GEN_EQ5", "--n", "6..2")[0] == 1
    assert run(capsys, "bogus")[0] == 1


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "verify", "T1_EQ1", "--r", "1", "--out",
                       str(tmp_path / "missing" / "x.json"))
    assert code == 1


def test_verify_and_replay(capsys, tmp_path):
    out = tmp_path / "cert.json"
    code, _, _ = run(capsys, "verify", "T1_EQ1", "--r", "e", "--eps", "1e-9", "--out", str(out))
    assert code == 0
    report = json.loads(out.read_text())
    assert report["status"] == "certified" and report["result"]["kind"] == "certificate"
    assert (tmp_path / "cert.json.timing.json").exists()
    assert run(capsys, "replay", str(out))[0] == 0
    # a forged bound is caught
    report["result"]["boxes"] = report["result"]["boxes"][1:]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(report))
    assert run(capsys, "replay", str(bad))[0] == 2


def test_report_round_trip(capsys, tmp_path):
    out = tmp_path / "r.json"
    run(capsys, "verify", "C4_8", "--out", str(out))
    text = out.read_text().strip()
    rep = cli.RunReport.from_dict(json.loads(text))
    assert rep.to_json() == text


def test_reports_are_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "verify", "T1_EQ1", "--r", "2", "--jobs", "1", "--out", str(a))
    run(capsys, "verify", "T1_EQ1", "--r", "2", "--jobs", "3", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_hunt_sharpness(capsys, tmp_path):
    out = tmp_path / "w.json"
    code, _, _ = run(capsys, "hunt", "SHARP_EQ2_RGT_E", "--r", "3.0", "--seed", "7",
                     "--out", str(out))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["result"]["kind"] == "refutation" and not rep["finding"]
    assert run(capsys, "replay", str(out))[0] == 0


def test_refuting_a_proved_entry_is_a_regression(capsys):
    code, out, _ = run(capsys, "verify", "T4_EQ4", "--n", "4")
    assert code == 2
    assert json.loads(out)["finding"] is True


def test_open_entry_refutation_is_a_finding(capsys):
    code, out, _ = run(capsys, "verify", "NEWCONJ3", "--n", "2")
    rep = json.loads(out)
    assert code == 0 and rep["finding"] is True


def test_inconclusive_where_proof_expected(capsys):
    code, _, _ = run(capsys, "verify", "T3_EQ3", "--max-boxes", "20")
    assert code == 3


def test_check(capsys):
    code, out, _ = run(capsys, "check", "LOG_BOUND")
    assert code == 0 and json.loads(out)["status"] == "holds"
    assert run(capsys, "check", "T1_EQ1")[0] == 1


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "GEN_EQ5", "--n", "2..3", "--r", "0:e:3",
                       "--format", "csv", "--starts", "16")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 6
    assert {r["r"] for r in rows} == {"0", "e", "1.3591409142295225"}
    assert all(float(r["min_gap"]) <= 1e-12 for r in rows)


def test_parse_grid():
    assert cli.parse_grid("0:1:3") == ["0", "0.5", "1"]
    assert cli.parse_grid("0.5") == ["0.5"]
    with pytest.raises(cli.UsageError):
        cli.parse_grid("0:1:x")


def test_parse_n():
    assert cli.parse_n("2..4") == [2, 3, 4]
    assert cli.parse_n("5") == [5]

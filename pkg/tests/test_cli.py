import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from bzkplate.cli import HEADERS, main

ROOT = Path(__file__).resolve().parents[1]
SCN = ROOT / "scenarios"
GOLDEN = Path(__file__).with_name("golden") / "headers.json"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return list(csv.reader(io.StringIO(text)))


def test_headers_match_golden_file():
    golden = json.loads(GOLDEN.read_text())
    assert {k: list(v) for k, v in HEADERS.items()} == golden


def test_limit_energy_cylinder(capsys):
    code, out, _ = run(capsys, "limit-energy", SCN / "cylinder.yaml")
    assert code == 0
    rows = table(out)
    assert rows[0] == list(HEADERS["limit-energy"])
    name, bulk, crack, void, total = rows[1]
    assert name == "cylinder"
    assert float(bulk) == pytest.approx(1 / 9) and float(total) == pytest.approx(1 / 9)
    assert float(crack) == float(void) == 0


def test_gamma_study_gaps_shrink(capsys):
    code, out, _ = run(capsys, "gamma-study", SCN / "cylinder.yaml", "--h", "1/8,1/16,1/32")
    assert code == 0
    rows = table(out)
    col = rows[0].index("gap")
    gaps = [abs(float(r[col])) for r in rows[1:]]
    assert gaps[0] > gaps[1] > gaps[2]


def test_droplet_check_ball(capsys):
    code, out, _ = run(capsys, "droplet-check", SCN / "ball.yaml", "--h", "1/8,1/16")
    assert code == 0
    rows = table(out)
    assert rows[0] == list(HEADERS["droplet-check"])
    assert len(rows) == 1 + 2 * 3
    assert all(r[-1] == "1" for r in rows[1:])


def test_minkowski_crack(capsys):
    code, out, _ = run(capsys, "minkowski", SCN / "crack.yaml")
    assert code == 0
    q = [float(r[1]) for r in table(out)[1:]]
    assert q[-1] == pytest.approx(2.0, rel=0.01)


def test_out_writes_csv_and_json(tmp_path, capsys):
    dest = tmp_path / "sub" / "limit.csv"
    code, out, _ = run(capsys, "limit-energy", SCN / "crack.yaml", "--out", dest)
    assert code == 0 and out == ""
    rows = table(dest.read_text())
    doc = json.loads(dest.with_suffix(".json").read_text())
    assert doc["subcommand"] == "limit-energy" and doc["header"] == rows[0]
    assert float(rows[1][4]) == pytest.approx(doc["rows"][0][4]) == pytest.approx(doc["summary"]["total"])


def test_recovery_is_deterministic(capsys):
    args = ("recovery", SCN / "cylinder.yaml", "--h", "1/8", "--seed", "7")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    rows = table(a)
    assert float(rows[1][rows[0].index("strain_identity_err")]) < 1e-6


def test_malformed_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema: 1\nid: bad\nmaterial: {family: granite}\n")
    code, out, err = run(capsys, "limit-energy", bad)
    assert code == 2 and out == ""
    assert "material.family" in err and "line 3" in err


def test_numerical_error_carries_context(tmp_path, capsys):
    scn = tmp_path / "c.yaml"
    scn.write_text((SCN / "cylinder.yaml").read_text())
    code, _, err = run(capsys, "gamma-study", scn, "--h", "1/16,1/8")
    assert code == 1
    assert "c.yaml" in err and "gamma-study" in err


def test_selftest_console_script():
    res = subprocess.run([sys.executable, "-m", "bzkplate.cli", "selftest"], capture_output=True, text=True,
                         timeout=300)
    assert res.returncode == 0, res.stderr
    rows = table(res.stdout)
    assert rows[0] == list(HEADERS["selftest"])
    assert all(r[3] == "1" for r in rows[1:])
    assert res.stderr.count("PASS") == len(rows) - 1

from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from frogcoex import cli, percolation, verify
from frogcoex.randfield import VECTORS_PATH


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")


def rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_g_table(tmp_path):
    out = tmp_path / "g.csv"
    assert cli.main(["g-table", "--d", "1,2", "--M", "0:2", "--p-list", "0.5,1.0", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# manifest: ")
    manifest = json.loads(text.splitlines()[0][len("# manifest: "):])
    assert manifest["subcommand"] == "g-table" and manifest["tool_version"]
    table = rows(out)
    assert list(table[0]) == ["d", "M", "p", "g_exact", "g_lower_bound"]
    r = next(r for r in table if r["d"] == "1" and r["M"] == "1" and r["p"] == "1.0")
    assert float(r["g_exact"]) == pytest.approx(0.75) and float(r["g_lower_bound"]) == pytest.approx(0.75)
    assert all(float(r["g_exact"]) == 0.0 for r in table if r["d"] == "2" and r["M"] == "0")


def test_g_table_empty_grid(capsys):
    assert cli.main(["g-table", "--p-list", ""]) == 2
    assert "non-empty" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert cli.main([]) == 2
    assert cli.main(["nope"]) == 2
    assert cli.main(["threshold", "--trials", "abc"]) == 2


def test_threshold_json(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["threshold", "--d", "2", "--L", "12", "--trials", "300", "--tol", "0.1", "--seed", "3"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    assert {"lo", "hi", "L", "trials", "seed"} <= set(da)
    da.pop("manifest"), db.pop("manifest")
    assert da == db
    assert cli.main(["threshold", "--tol", "1", "--seed", "1", "--out", str(a)]) == 0
    d = json.loads(a.read_text())
    assert (d["lo"], d["hi"]) == (0.0, 1.0)


def read_stream(path):
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    return lines[0], lines[1:-1], lines[-1]


def test_two_type_stream(tmp_path):
    out, summary = tmp_path / "t.jsonl", tmp_path / "s.csv"
    code = cli.main(["two-type", "--trials", "6", "--seed", "2", "--depth", "10", "--out", str(out), "--summary-csv", str(summary)])
    assert code == 0
    man, trials, summ = read_stream(out)
    assert man["kind"] == "manifest" and man["params"]["p2"] == 0.6
    assert len(trials) == 6 and all(t["kind"] == "trial" for t in trials)
    assert summ["kind"] == "summary" and summ["counterexamples"] == 0
    assert summ["ci_lo"] > 0
    assert summary.read_text().splitlines()[0].startswith("setup,mode,trials")


def test_two_type_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    base = ["two-type", "--trials", "3", "--seed", "9", "--depth", "6", "--out"]
    cli.main(base + [str(a)])
    cli.main(base + [str(b)])
    strip = lambda p: p.read_text().splitlines()[1:]
    assert strip(a) == strip(b)


def test_two_type_invalid_setup(capsys):
    assert cli.main(["two-type", "--y", "3,3", "--m", "1", "--seed", "1"]) == 2
    assert "m >=" in capsys.readouterr().err


def test_multi_type(tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    args = ["multi-type", "--starts", "0,0;1,0;0,1;1,1", "--p-list", "1.0,0.8,0.6,0.5", "--m", "2", "--depth", "6", "--trials", "2", "--seed", "1", "--out", str(out)]
    assert cli.main(args) == 0
    _, trials, summ = read_stream(out)
    assert len(trials) == 2 and summ["counterexamples"] == 0
    assert cli.main(["multi-type", "--starts", "0,0;1,0;0,1", "--seed", "1"]) == 2
    assert "2^d = 4" in capsys.readouterr().err


def test_slab(tmp_path, capsys):
    assert cli.main(["slab", "--d", "2", "--seed", "1"]) == 2
    assert "requires d ≥ 3" in capsys.readouterr().err
    out = tmp_path / "s.jsonl"
    assert cli.main(["slab", "--k", "3", "--depth", "4", "--trials", "3", "--seed", "1", "--out", str(out)]) == 0
    _, trials, summ = read_stream(out)
    assert len(trials[0]["E"]) == 3


def test_generated_seed_printed(capsys):
    assert cli.main(["slab", "--k", "2", "--depth", "2", "--trials", "1"]) == 0
    captured = capsys.readouterr()
    assert captured.err.startswith("seed: ")
    seed = int(captured.err.split()[1])
    assert json.loads(captured.out.splitlines()[0])["seed"] == seed


SIM = """# one type
d = 2
types = 1:1.0
actives = 0,0:1
eta_m0 = 1
horizon = 20
seed = 5
"""


def test_simulate(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SIM)
    out = tmp_path / "a.json"
    assert cli.main(["simulate", str(cfg), "--out", str(out)]) == 0
    first = out.read_bytes()
    data = json.loads(first)
    assert all(sum(abs(c) for c in d["site"]) <= 20 for d in data["discoveries"])
    assert data["manifest"]["params"]["config_text"] == SIM
    assert cli.main(["simulate", str(cfg), "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_simulate_horizon_zero(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SIM)
    assert cli.main(["simulate", str(cfg), "--horizon", "0"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["counts"] == [[1]] and len(data["discoveries"]) == 1


def test_simulate_bad_configs(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("d = 2\nwhat = 3\n")
    assert cli.main(["simulate", str(cfg)]) == 2
    cfg.write_text("d = two\n")
    assert cli.main(["simulate", str(cfg)]) == 2
    cfg.write_text("d = 2\n")
    assert cli.main(["simulate", str(cfg)]) == 2
    assert "missing keys" in capsys.readouterr().err
    assert cli.main(["simulate", str(tmp_path / "absent.cfg")]) == 2


def test_simulate_guard_failure(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SIM.replace("eta_m0 = 1", "eta_m0 = 3"))
    real = cli.sim_config_from
    monkeypatch.setattr(cli, "sim_config_from", lambda vals, seed: __import__("dataclasses").replace(real(vals, seed), max_sites=10))
    assert cli.main(["simulate", str(cfg)]) == 1
    assert "cap" in capsys.readouterr().err


def test_verify_clean(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out and "FAIL" not in out


def test_verify_corrupt_vectors(tmp_path, capsys):
    data = json.loads(VECTORS_PATH.read_text())
    data["hashes"][0]["out"] = "0" * 16
    bad = tmp_path / "v.json"
    bad.write_text(json.dumps(data))
    assert cli.main(["verify", "--vectors", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "FAIL  rand-field test vectors" in out
    assert "failed checks: rand-field test vectors" in out


def test_verify_g_mismatch(monkeypatch, capsys):
    real = percolation.g_exact
    monkeypatch.setattr(percolation, "g_exact", lambda M, p, d, n=None: real(M, p, d, n) + 1e-9)
    assert cli.main(["verify"]) == 1
    assert "failed checks: g_exact vs g_bruteforce" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "frogcoex", "g-table", "--d", "1", "--M", "1", "--p-list", "1.0"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "1,1,1.0,0.75" in r.stdout.replace("0.7500000000000002", "0.75")


def test_verify_checks_listed():
    assert "g_exact vs g_bruteforce" in verify.CHECKS and "rand-field test vectors" in verify.CHECKS

import json

import pytest

from arksim.cli import main


def test_no_command_exits_2(capsys):
    assert main([]) == 2


def test_unknown_scenario_exits_2(capsys):
    assert main(["run", "nope"]) == 2


def test_footprint_csv(capsys, tmp_path):
    out = tmp_path / "table.csv"
    assert main(["footprint", "--fee-rate", "6", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,depth,vbytes,sats"
    assert "128,7,1157,6942" in lines


def test_run_scenario_writes_report(tmp_path):
    out = tmp_path / "report.json"
    code = main(["run", "censoring_operator", "--seed", "3", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["scenario"] == "censoring_operator"
    assert all(v["pass"] for v in rep["verdicts"])


def test_seed_determinism_via_cli(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["run", "censoring_operator", "--seed", "8", "--out", str(a)])
    main(["run", "censoring_operator", "--seed", "8", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_unsafe_gate(tmp_path, capsys):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"k": 6, "t_u": 10}))
    assert main(["run", "censoring_operator", "--config", str(cfg)]) == 2
    assert main(["run", "censoring_operator", "--config", str(cfg),
                 "--unsafe", "--out", str(tmp_path / "r.json")]) == 0


def test_bench_commit_small(tmp_path):
    out = tmp_path / "bench.json"
    code = main(["bench-commit", "--sizes", "2", "4", "8", "16",
                 "--out", str(out)])
    rep = json.loads(out.read_text())
    assert "fit" in rep and "r_squared" in rep["fit"]
    assert code in (0, 1)

import csv
import json

import pytest

from saltolab.cli import main
from saltolab.config import RESOLVED_NAME
from saltolab.env import read_log
from saltolab.terrain import TerrainProfile, TerrainSpec, generate_terrain


def rows_of(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_terrain_command_writes_fourteen_stairs(tmp_path):
    a, b = tmp_path / "a" / "stairs.json", tmp_path / "b" / "stairs.json"
    args = ["terrain", "--kind", "stairs", "--level", "9", "--seed", "1"]
    assert main(args + ["-o", str(a), "--profile-csv", str(tmp_path / "p.csv")]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    t = TerrainProfile.load(a)
    assert t == generate_terrain(TerrainSpec("stairs", 9, 1))
    rises = [h1 - h0 for (_, h0), (_, h1) in zip(t.breakpoints, t.breakpoints[1:])]
    assert len(rises) == 14 and all(r == pytest.approx(0.2) for r in rises)
    assert len(rows_of(tmp_path / "p.csv")) == 701
    assert a.with_suffix(".config.json").exists()


def test_invalid_level_exits_2(tmp_path, capsys):
    assert main(["terrain", "--kind", "stairs", "--level", "99", "-o", str(tmp_path / "x.json")]) == 2
    assert "InvalidLevel" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == 2
    assert main(["run", "--out", str(tmp_path), "--override", "env.nope=1"]) == 2
    assert main(["run", "--out", str(tmp_path), "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["check", "--subset", "nothing"]) == 2
    assert main(["run", "--out", str(tmp_path), "--replay", str(tmp_path / "missing.csv")]) == 2


def test_run_seed_42_bounds_forward(tmp_path, capsys):
    assert main(["run", "--seed", "42", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["distance"] > 1.0 and summary["termination"] == "Timeout"
    assert (tmp_path / RESOLVED_NAME).exists()
    lines = (tmp_path / "summary.jsonl").read_text().splitlines()
    assert json.loads(lines[-1]) == summary


def test_timeout_override_bounds_log_length(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--override", "env.timeout_s=1"]) == 0
    assert len(read_log(tmp_path / "rollout.csv")) <= 100 * 5


def test_replay_reproduces_log(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["run", "--seed", "3", "--out", str(first), "--override", "env.timeout_s=1.5"]) == 0
    assert main(["run", "--seed", "3", "--out", str(second), "--override", "env.timeout_s=1.5",
                 "--replay", str(first / "rollout.csv")]) == 0
    assert (first / "rollout.csv").read_bytes() == (second / "rollout.csv").read_bytes()


def test_strict_mode_flags_a_fall(tmp_path):
    # the untuned cruise policy falls quickly
    falls = ["run", "--out", str(tmp_path), "--override", "policy.scripted={}"]
    assert main(falls) == 0
    assert main(falls + ["--strict"]) == 3


def test_seed_env_var_is_the_default(tmp_path, monkeypatch):
    monkeypatch.setenv("SALTOLAB_SEED", "31")
    assert main(["run", "--out", str(tmp_path), "--override", "env.timeout_s=0.1"]) == 0
    assert json.loads((tmp_path / RESOLVED_NAME).read_text())["seed"] == 31
    assert json.loads((tmp_path / "summary.jsonl").read_text())["seed"] == 31


def test_empty_suite_writes_header_only(tmp_path):
    assert main(["eval", "--suite", "empty", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").read_text().strip() == \
        "suite,variant,terrain,level,seed,distance,steps_reached,termination"
    assert (tmp_path / RESOLVED_NAME).exists()


def test_stairs_ablation_rows_and_determinism(tmp_path):
    args = ["eval", "--suite", "stairs-ablation", "--seeds", "5", "--override", "env.timeout_s=0.5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    rows = rows_of(tmp_path / "a" / "metrics.csv")
    variants = {r["variant"] for r in rows}
    assert len(variants) == 4
    for v in variants:
        mine = [r for r in rows if r["variant"] == v]
        assert len(mine) == 6 and mine[-1]["seed"] == "median"


def test_check_subset_qp(tmp_path):
    out = tmp_path / "report.json"
    assert main(["check", "--subset", "qp", "--json", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["passed"] and {c["subset"] for c in report["checks"]} == {"qp"}

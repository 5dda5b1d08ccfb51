import json

import pytest

from envtrace.cli import run_cli
from envtrace.trace import load_trace


@pytest.fixture
def progs(data_dir):
    return data_dir / "programs"


def test_run_grid_scan(tmp_path, progs, capsys):
    out = tmp_path / "gt.jsonl"
    assert run_cli(["run", str(progs / "map_scan_ground_truth.ictl"), "--trace", str(out)]) == 0
    assert len(load_trace(out).events) == 38
    assert "38 events" in capsys.readouterr().err


def test_run_to_stdout(progs, capsysbinary):
    assert run_cli(["run", str(progs / "map_scan_serpentine.ictl")]) == 0
    lines = capsysbinary.readouterr().out.decode().splitlines()
    assert sum('"pv"' in ln for ln in lines) == 36


def test_run_syntax_error(tmp_path, capsys):
    bad = tmp_path / "bad.ictl"
    bad.write_text("measure(1)\nmove_rel(x,)\n")
    assert run_cli(["run", str(bad)]) == 2
    assert "bad.ictl:2:11" in capsys.readouterr().err


def test_run_runtime_error(tmp_path):
    bad = tmp_path / "bad.ictl"
    bad.write_text("move_rel(x, 1)\nnope()\n")
    out = tmp_path / "t.jsonl"
    assert run_cli(["run", str(bad), "--trace", str(out)]) == 3
    tr = load_trace(out)
    assert len(tr.events) == 1 and tr.meta.error


def test_eval_serpentine(progs, capsys):
    code = run_cli(["eval", "--gt", str(progs / "map_scan_ground_truth.ictl"), "--cand", str(progs / "map_scan_serpentine.ictl")])
    assert code == 0
    out = capsys.readouterr().out
    assert "#PV match rate: 60.00% (24/40)" in out
    line = next(ln for ln in out.splitlines() if "Full score" in ln)
    score = float(line.rsplit(":", 1)[1].strip(" )"))
    assert score == pytest.approx(0.654, abs=0.02)
    assert "Accuracy: False" in line


def test_eval_json_stable(progs, capsys):
    args = ["eval", "--gt", str(progs / "map_scan_ground_truth.ictl"), "--cand", str(progs / "map_scan_serpentine.ictl"),
            "--format", "json", "--jitter", "0.05", "--seed", "4"]
    assert run_cli(args) == 0
    a = capsys.readouterr().out
    assert run_cli(args) == 0
    assert capsys.readouterr().out == a
    assert json.loads(a)["best_full_score"] > 0


def test_eval_dataset_task(data_dir, tmp_path, capsys):
    cand = tmp_path / "c.ictl"
    cand.write_text("measure(1)\n")
    ds = str(data_dir / "datasets/simple_flow.jsonl")
    assert run_cli(["eval", "--dataset", ds, "--task", "simple-02", "--cand", str(cand)]) == 0
    assert "Accuracy: True" in capsys.readouterr().out
    assert run_cli(["eval", "--dataset", ds, "--task", "missing", "--cand", str(cand)]) == 4
    assert run_cli(["eval", "--dataset", ds, "--cand", str(cand)]) == 1


def test_usage_errors(progs, capsys):
    gt = str(progs / "map_scan_ground_truth.ictl")
    assert run_cli([]) == 1
    assert run_cli(["eval", "--cand", gt]) == 1
    assert run_cli(["eval", "--gt", gt, "--dataset", "x", "--cand", gt]) == 1
    assert run_cli(["run", gt, "--jitter", "2"]) == 1
    assert run_cli(["bench", "--dataset", "x", "--candidates", "y", "--debug-baseline"]) == 1
    assert run_cli(["frobnicate"]) == 1


def test_config_errors(tmp_path, progs):
    gt = str(progs / "map_scan_ground_truth.ictl")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"axes": [{"name": "x", "velocity": 0}]}))
    assert run_cli(["run", gt, "--env", str(cfg)]) == 4
    snap = tmp_path / "s.json"
    snap.write_text(json.dumps({"pvs": {"FOO": 1}}))
    assert run_cli(["run", gt, "--snapshot", str(snap)]) == 4
    assert run_cli(["run", str(tmp_path / "missing.ictl")]) == 4
    assert run_cli(["bench", "--dataset", str(tmp_path / "nope.jsonl"), "--debug-baseline"]) == 4


def test_snapshot_and_env(data_dir, tmp_path):
    prog = tmp_path / "p.ictl"
    prog.write_text("move_abs(x, 1.5)\nmeasure(1)\n")
    out = tmp_path / "t.jsonl"
    cfgs = data_dir / "configs"
    code = run_cli(["run", str(prog), "--env", str(cfgs / "example_env.json"),
                    "--snapshot", str(cfgs / "example_snapshot.json"), "--trace", str(out)])
    assert code == 0
    assert [e.pv for e in load_trace(out).events] == ["SIM:DET:AcquireTime", "SIM:DET:Acquire", "SIM:DET:Acquire"]


def test_diff_traces(data_dir, capsys, tmp_path):
    gt = str(data_dir / "map_scan_ground_truth.trace.jsonl")
    pred = str(data_dir / "map_scan_predicted.trace.jsonl")
    assert run_cli(["diff-traces", gt, pred]) == 0
    out = capsys.readouterr().out
    assert "Matches:      24" in out
    assert "Timing match: True (score: 0.871)" in out
    assert "Full match: False (score: 0.654)" in out
    js = tmp_path / "d.json"
    assert run_cli(["diff-traces", gt, pred, "--format", "json", "--out", str(js)]) == 0
    doc = json.loads(js.read_text())
    assert (doc["matches"], doc["total_pairs"]) == (24, 40)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert run_cli(["diff-traces", gt, str(bad)]) == 4


def test_bench_writes_report_and_figures(data_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ENVTRACE_CACHE_DIR", str(tmp_path / "cache"))
    out = tmp_path / "report.csv"
    code = run_cli(["bench", "--dataset", str(data_dir / "datasets/plans.jsonl"),
                    "--candidates", str(data_dir / "candidates/strong.json"),
                    "--runs", "2", "--format", "csv", "--out", str(out)])
    assert code == 0
    assert len(out.read_text().splitlines()) == 1 + 3 * 2
    assert (tmp_path / "report.scatter.png").stat().st_size > 0
    assert (tmp_path / "report.components.png").stat().st_size > 0
    assert list((tmp_path / "cache").glob("*.trace.jsonl"))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cache", "report.components.png", "report.csv", "report.scatter.png"]


def test_bench_no_figures_and_md(data_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ENVTRACE_CACHE_DIR", raising=False)
    out = tmp_path / "r.md"
    code = run_cli(["bench", "--dataset", str(data_dir / "datasets/plans.jsonl"), "--debug-baseline",
                    "--runs", "1", "--out", str(out), "--no-figures", "--model", "gt"])
    assert code == 0
    assert "| gt | 100.0 ± 0.0 | 100.0 ± 0.0 | 100.0 ± 0.0 | 0.0 ± 0.0 |" in out.read_text()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["r.md"]
    assert run_cli(["bench", "--dataset", str(data_dir / "datasets/plans.jsonl"), "--debug-baseline", "--runs", "0"]) == 1

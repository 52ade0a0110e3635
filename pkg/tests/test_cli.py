from __future__ import annotations

import csv
import filecmp
import json

import numpy as np
import pytest

from semcanvas.cli import main, mover_onsets, staleness
from semcanvas.metrics import read_log
from semcanvas.sequence import DiskScene
from semcanvas.synth import SYNTH_TAXONOMY, SyntheticScene, mover_scene

SMALL = ["--width", "128", "--height", "96", "--frames", "30"]


@pytest.fixture(scope="module")
def mover_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mover")
    assert main(["synth", "--preset", "mover", "--seed", "3", "-o", str(out), *SMALL]) == 0
    return out


def write_log(path, n, calls, ms):
    with open(path, "w") as f:
        for i in range(n):
            f.write(json.dumps({"frame_index": i, "t_total_ms": ms, "seg_submitted": int(i < calls)}) + "\n")


def test_synth_matches_memory_and_is_deterministic(mover_dir, tmp_path):
    disk = DiskScene(mover_dir)
    mem = SyntheticScene(mover_scene(seed=3, viewport_w=128, viewport_h=96, frame_count=30))
    assert disk.frame_count == 30 and disk.has_truth
    for t in (0, 12, 29):
        np.testing.assert_array_equal(disk.raw_frame(t), mem.color_frame(t))
        np.testing.assert_array_equal(disk.truth_labels(t), mem.truth_labels(t))
    again = tmp_path / "again"
    assert main(["synth", "--preset", "mover", "--seed", "3", "-o", str(again), *SMALL]) == 0
    cmp = filecmp.dircmp(mover_dir, again)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    _, mismatch, errors = filecmp.cmpfiles(mover_dir / "truth_labels", again / "truth_labels",
                                           [p.name for p in (mover_dir / "truth_labels").iterdir()], shallow=False)
    assert not mismatch and not errors


def test_synth_unwritable_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--preset", "static", "-o", str(blocker / "sub"), *SMALL]) != 0
    assert "semcanvas synth" in capsys.readouterr().err
    assert main(["synth", "--preset", "static", "-o", str(tmp_path / "z"), "--frames", "0"]) == 1


def test_run_gated_and_naive(mover_dir, tmp_path):
    g, n = tmp_path / "g.jsonl", tmp_path / "n.jsonl"
    assert main(["run", str(mover_dir), "--mode", "gated", "--backend", "mock", "--mock-latency-ms", "5",
                 "--log", str(g)]) == 0
    recs, summary = read_log(g)
    assert summary is not None and summary["frames"] == len(recs) == 30
    assert main(["run", str(mover_dir), "--mode", "naive", "--mock-latency-ms", "1", "--log", str(n),
                 "--debug-tiles", str(tmp_path / "tiles"), "--debug-every", "10"]) == 0
    recs, summary = read_log(n)
    assert all(r["seg_submitted"] == 1 for r in recs) and summary["seg_calls"] == 30
    assert len(list((tmp_path / "tiles").glob("tiles_*.ppm"))) == 3
    out = tmp_path / "cmp.json"
    assert main(["compare", str(n), str(g), "--out", str(out), "--timeseries", str(tmp_path / "ts")]) == 0
    assert json.loads(out.read_text())["speedup_calls"] >= 1
    assert (tmp_path / "ts" / "gated.csv").is_file()


def test_run_static_scene_zero_calls(tmp_path):
    scene = tmp_path / "static"
    assert main(["synth", "--preset", "static", "-o", str(scene), "--gray", *SMALL]) == 0
    log = tmp_path / "s.jsonl"
    assert main(["run", str(scene), "--mode", "gated", "--log", str(log)]) == 0
    assert read_log(log)[1]["seg_calls"] == 0


def test_run_errors(tmp_path, mover_dir):
    assert main(["run", str(tmp_path / "missing"), "--mode", "gated"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("gate: {tau_z: 1}\n")
    assert main(["run", str(mover_dir), "--config", str(bad)]) == 1
    assert main(["run", str(mover_dir), "--tau-a", "1.5"]) == 1


def test_config_env_override(tmp_path, mover_dir, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("pipeline: {mode: naive}\n")
    monkeypatch.setenv("SEMCANVAS_CONFIG", str(cfg))
    log = tmp_path / "e.jsonl"
    assert main(["run", str(mover_dir), "--log", str(log)]) == 0
    assert read_log(log)[1]["seg_calls"] == 30


def test_compare_reference_shaped(tmp_path, capsys):
    n, g = tmp_path / "n.jsonl", tmp_path / "g.jsonl"
    write_log(n, 2000, 1909, 5100.1)
    write_log(g, 2000, 54, 170.5)
    out = tmp_path / "r.json"
    assert main(["compare", str(n), str(g), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "speedup_calls: 35.35" in text and "speedup_mean:  29.91" in text
    rep = json.loads(out.read_text())
    assert rep["speedup_calls"] == pytest.approx(35.35, abs=0.01)
    assert rep["speedup_mean"] == pytest.approx(29.91, abs=0.01)
    assert rep["naive"]["call_rate"] == 0.9545


def test_compare_identical_and_bad_logs(tmp_path):
    a = tmp_path / "a.jsonl"
    write_log(a, 50, 10, 12.0)
    out = tmp_path / "r.json"
    assert main(["compare", str(a), str(a), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["speedup_calls"] == rep["speedup_mean"] == 1.0
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["compare", str(a), str(empty)]) == 2
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"frame_index": 0,\n')
    assert main(["compare", str(a), str(broken)]) == 2
    assert main(["compare", str(a), str(tmp_path / "nope.jsonl")]) == 2


def test_sweep(mover_dir, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(mover_dir), "--tau-s", "4,0.5", "--tau-a", "0.002,0.05", "--min-spacing", "3",
                 "--lockstep", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4 and list(rows[0]) == ["tau_s", "tau_a", "min_spacing", "call_rate", "mean_ms", "staleness"]
    rate = {(float(r["tau_s"]), float(r["tau_a"])): float(r["call_rate"]) for r in rows}
    for ta in (0.002, 0.05):
        assert rate[(0.5, ta)] >= rate[(4.0, ta)]
    for ts in (0.5, 4.0):
        assert rate[(ts, 0.002)] >= rate[(ts, 0.05)]
    huge = tmp_path / "huge.csv"
    assert main(["sweep", str(mover_dir), "--tau-s", "1e9", "--tau-a", "0.01", "--min-spacing", "0",
                 "--out", str(huge)]) == 0
    (row,) = list(csv.DictReader(huge.open()))
    assert float(row["call_rate"]) == 0.0 and float(row["staleness"]) == 30 - 5


def test_sweep_invalid_grids(mover_dir, tmp_path):
    out = str(tmp_path / "x.csv")
    base = ["sweep", str(mover_dir), "--out", out]
    assert main([*base, "--tau-s", "0", "--tau-a", "0.1", "--min-spacing", "1"]) == 1
    assert main([*base, "--tau-s", "1", "--tau-a", "1.0", "--min-spacing", "1"]) == 1
    assert main([*base, "--tau-s", "1", "--tau-a", "0.1", "--min-spacing", "-2"]) == 1
    assert main([*base, "--tau-s", "a,b", "--tau-a", "0.1", "--min-spacing", "1"]) == 1


def test_staleness_helpers(mover_dir):
    assert mover_onsets(DiskScene(mover_dir), SYNTH_TAXONOMY) == [5]
    assert staleness([5, 20], [7, 21], 30) == 1.5
    assert staleness([5], [], 30) == 25
    assert staleness([5], [2, 9], 30) == 4
    assert np.isnan(staleness([], [1], 30))


def test_usage_errors():
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["run"]) == 1
    assert main(["run", "x", "--mode", "sometimes"]) == 1
    assert main(["--help"]) == 0

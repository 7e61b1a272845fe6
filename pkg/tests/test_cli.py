import json

import numpy as np
import pytest

from spanloc.cli import run

TINY = [
    "--set", "data.count=6",
    "--set", "data.frames=8",
    "--set", "data.segment_len=[2,4]",
    "--set", "data.query_len=[2,3]",
    "--set", "model.max_t=16",
]
TINY_MODEL = [
    "--set", "model.d_model=8",
    "--set", "model.hidden=4",
    "--set", "model.d_video_in=16",
    "--set", "model.local_scales=[1,3]",
    "--set", "model.global_scales=[1,2]",
    "--set", "model.d_boundary=8",
    "--set", "model.d_context=8",
]


def generate(tmp_path, name, extra=()):
    out = tmp_path / name
    code = run(["generate", "--out", str(out), *TINY, *extra])
    assert code == 0
    return out / "dataset"


def test_generate_is_byte_identical_across_runs(tmp_path):
    a = generate(tmp_path, "a", ["--seed", "7"])
    b = generate(tmp_path, "b", ["--seed", "7"])
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    assert a.with_suffix(".bin").read_bytes() == b.with_suffix(".bin").read_bytes()


def test_train_eval_score_pipeline(tmp_path, capsys):
    data = generate(tmp_path, "data")
    train_out = tmp_path / "run"
    code = run([
        "train", "--data", str(data), "--out", str(train_out),
        *TINY, *TINY_MODEL,
        "--set", "train.epochs=2", "--set", "train.batch_size=2",
    ])
    assert code == 0
    assert (train_out / "checkpoint.bin").exists()
    assert (train_out / "loss_trace.csv").read_text().startswith("step,loss")
    assert (train_out / "loss_trace.png").stat().st_size > 0

    eval_out = tmp_path / "eval"
    code = run([
        "eval", "--data", str(data), "--out", str(eval_out),
        "--checkpoint", str(train_out / "checkpoint.bin"),
        "--n", "1,5", "--iou", "0.3,0.5", *TINY, *TINY_MODEL,
    ])
    assert code == 0
    report = json.loads((eval_out / "metrics.json").read_text())
    assert {entry["metric"] for entry in report} == {
        "R@1,IoU=0.3", "R@1,IoU=0.5", "R@5,IoU=0.3", "R@5,IoU=0.5",
    }
    assert all(0.0 <= entry["value"] <= 100.0 for entry in report)
    assert (eval_out / "metrics.png").stat().st_size > 0
    out = capsys.readouterr().out
    assert "R@1,IoU=0.3 = " in out

    map_csv = tmp_path / "maps" / "sample.csv"
    code = run([
        "score", "--data", str(data), "--index", "1",
        "--checkpoint", str(train_out / "checkpoint.bin"),
        "--dump-map", str(map_csv), "--out", str(tmp_path / "score"),
        *TINY, *TINY_MODEL,
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "best segment" in out and "timestamps" in out
    grid = np.loadtxt(map_csv, delimiter=",")
    assert grid.shape == (8, 8)
    assert map_csv.with_suffix(".png").stat().st_size > 0


def test_untrained_model_evaluates_near_chance(tmp_path, capsys):
    out = tmp_path / "data"
    assert run(["generate", "--out", str(out), "--set", "data.count=24"]) == 0
    code = run([
        "eval", "--data", str(out / "dataset"), "--out", str(tmp_path / "eval"),
        "--n", "1", "--iou", "0.7",
    ])
    assert code == 0
    report = json.loads((tmp_path / "eval" / "metrics.json").read_text())
    assert report[0]["metric"] == "R@1,IoU=0.7"
    assert report[0]["value"] < 50.0
    capsys.readouterr()


def test_train_trace_reproducible(tmp_path):
    data = generate(tmp_path, "data")
    args = lambda name: [
        "train", "--data", str(data), "--out", str(tmp_path / name),
        *TINY, *TINY_MODEL,
        "--set", "train.epochs=1", "--set", "train.batch_size=3",
    ]
    assert run(args("r1")) == 0
    assert run(args("r2")) == 0
    assert (tmp_path / "r1" / "loss_trace.csv").read_bytes() == (
        tmp_path / "r2" / "loss_trace.csv"
    ).read_bytes()
    assert (tmp_path / "r1" / "checkpoint.bin").read_bytes() == (
        tmp_path / "r2" / "checkpoint.bin"
    ).read_bytes()


def test_gradcheck_exit_codes(monkeypatch, capsys):
    import spanloc.cli as cli_mod

    monkeypatch.setattr(cli_mod, "run_battery", lambda seed: {"ops": [("op", 1e-9)]})
    assert run(["gradcheck"]) == 0
    assert "max rel err" in capsys.readouterr().out

    monkeypatch.setattr(cli_mod, "run_battery", lambda seed: {"ops": [("op", 1.0)]})
    assert run(["gradcheck"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_unknown_flag_exits_with_usage_code(capsys):
    assert run(["eval", "--data", "x", "--frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_command_exits_with_usage_code():
    assert run(["transmogrify"]) == 2


def test_missing_dataset_is_a_diagnostic_not_a_crash(tmp_path, capsys):
    code = run(["eval", "--data", str(tmp_path / "absent"), "--out", str(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bad_override_is_a_diagnostic(tmp_path, capsys):
    code = run(["generate", "--out", str(tmp_path), "--set", "data.frames"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_score_index_out_of_range(tmp_path, capsys):
    data = generate(tmp_path, "data")
    code = run(["score", "--data", str(data), "--index", "99", *TINY, *TINY_MODEL])
    assert code == 1
    assert "index" in capsys.readouterr().err

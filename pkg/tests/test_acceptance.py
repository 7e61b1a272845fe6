"""Acceptance suite: every criterion as one test, one printed verdict line.

Run with ``pytest tests/test_acceptance.py -v -s``. The learnability and
ablation runs train real models and together take several minutes of CPU.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest

import spanloc.attention as attention_mod
import spanloc.localizer as localizer_mod
from spanloc import tensor as tc
from spanloc.cli import run as cli_run
from spanloc.data import SyntheticSpec, generate_dataset
from spanloc.evaluation import recall_at, top_n_segments
from spanloc.gradcheck import run_battery
from spanloc.localizer import global_spans
from spanloc.model import GroundingModel, ModelConfig
from spanloc.optim import TrainConfig
from spanloc.supervision import bce_loss, build_supervision
from spanloc.tensor import tensor
from spanloc.training import train

GRAD_TOL = 1e-4


def verdict(num, name, passed, detail):
    print(f"\ncriterion {num} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="module")
def task():
    spec = SyntheticSpec(seed=0)
    return {
        "train": generate_dataset(spec, 512),
        "test": generate_dataset(spec, 128, start_index=512),
    }


def evaluate_recall(model, dataset, n, threshold, nms_iou=0.5):
    predictions = [
        top_n_segments(model.score(ex.features, ex.tokens).data, n, nms_iou)
        for ex in dataset
    ]
    return recall_at(predictions, [ex.gt for ex in dataset], n, threshold)


def test_criterion_1_gradient_soundness():
    started = time.time()
    battery = run_battery(seed=0)
    elapsed = time.time() - started
    worst_group = {g: max(e for _, e in entries) for g, entries in battery.items()}
    worst = max(worst_group.values())
    passed = worst < GRAD_TOL and elapsed < 60.0
    verdict(
        1, "gradient soundness", passed,
        f"worst rel err {worst:.3e} (per group: "
        + ", ".join(f"{g}={v:.1e}" for g, v in worst_group.items())
        + f"), runtime {elapsed:.1f} s",
    )
    assert worst < GRAD_TOL
    assert elapsed < 60.0


def test_criterion_2_supervision_oracle():
    def brute_force(p, gt):
        if p[0] > p[1]:
            return 0.0
        a = set(range(p[0], p[1] + 1))
        b = set(range(gt[0], gt[1] + 1))
        return len(a & b) / len(a | b)

    checked = 0
    exact = True
    for frames in range(2, 9):
        for gs in range(frames):
            for ge in range(gs, frames):
                got = build_supervision((gs, ge), frames)
                want = np.array(
                    [
                        [brute_force((s, e), (gs, ge)) for e in range(frames)]
                        for s in range(frames)
                    ]
                )
                want /= want.max()
                exact &= np.array_equal(got, want) and got.max() == 1.0
                checked += 1
    verdict(2, "supervision oracle", exact, f"{checked} ground truths, all exact, max == 1")
    assert exact


def test_criterion_3_shape_and_range(monkeypatch):
    captured = []
    real_softmax = tc.softmax

    def capturing_softmax(x, axis=-1):
        out = real_softmax(x, axis)
        captured.append(np.sum(out.data, axis=axis))
        return out

    monkeypatch.setattr(attention_mod, "softmax", capturing_softmax)
    monkeypatch.setattr(localizer_mod, "softmax", capturing_softmax)

    model = GroundingModel(ModelConfig(), seed=0)
    rng = np.random.default_rng(3)
    ok = True
    for frames in (2, 8, 32):
        features = rng.standard_normal((frames, 16))
        tokens = rng.integers(0, 64, size=4).tolist()
        score_map = model.score(features, tokens).data
        ok &= score_map.shape == (frames, frames)
        ok &= bool(np.all((score_map > 0.0) & (score_map < 1.0)))
        ok &= bool(np.all(np.isfinite(score_map)))
    row_errs = [np.max(np.abs(s - 1.0)) for s in captured]
    ok &= bool(captured) and max(row_errs) < 1e-9
    verdict(
        3, "shape/range suite", ok,
        f"maps for T in (2, 8, 32) in (0,1), {len(captured)} softmax calls, "
        f"row-sum err {max(row_errs):.1e}",
    )
    assert ok


def test_criterion_4_analytic_degenerate_cases():
    model = GroundingModel(ModelConfig(), seed=4)
    model.store.set_all(0.0)
    features = np.random.default_rng(5).standard_normal((10, 16))
    zero_map = model.score(features, [1, 2, 3]).data
    exact_half = np.array_equal(zero_map, np.full((10, 10), 0.5))

    for head in model.scorer.heads:
        head.pair_bias.data[...] = 0.3
    biased_map = model.score(features, [1, 2, 3]).data
    target = 1.0 / (1.0 + math.exp(-0.3))
    bias_ok = np.max(np.abs(biased_map - target)) < 1e-12

    targets = build_supervision((2, 7), 12)
    ln2_err = abs(bce_loss(tensor(np.full((12, 12), 0.5)), targets).item() - math.log(2))

    seq = tensor(np.random.default_rng(6).standard_normal((9, 5)))
    identity_ok = np.array_equal(global_spans(seq, 1).data, seq.data)

    passed = exact_half and bias_ok and ln2_err < 1e-9 and identity_ok
    verdict(
        4, "analytic degenerate cases", passed,
        f"zero-parameter map == 0.5 exactly: {exact_half}; bias map err "
        f"{np.max(np.abs(biased_map - target)):.1e}; ln2 err {ln2_err:.1e}; "
        f"unit-span bank identity: {identity_ok}",
    )
    assert passed


def test_criterion_5_learnability(task):
    model = GroundingModel(ModelConfig(), seed=0)
    config = TrainConfig(learning_rate=8e-4, batch_size=8, epochs=20, seed=0)
    started = time.time()
    result = train(model, task["train"], config)
    runtime = time.time() - started

    train_recall = evaluate_recall(model, task["train"], 1, 0.7)
    test_recall = evaluate_recall(model, task["test"], 1, 0.5)
    first = result.losses[0]
    halved_at = next(
        (i + 1 for i, l in enumerate(result.losses[:200]) if l <= first / 2), None
    )
    passed = (
        train_recall >= 90.0
        and test_recall >= 60.0
        and runtime <= 900.0
        and halved_at is not None
    )
    verdict(
        5, "learnability", passed,
        f"{config.epochs} epochs in {runtime:.0f} s; train R@1,IoU=0.7 = "
        f"{train_recall:.1f} (need >= 90), test R@1,IoU=0.5 = {test_recall:.1f} "
        f"(need >= 60); loss halved at step {halved_at}",
    )
    assert train_recall >= 90.0
    assert test_recall >= 60.0
    assert runtime <= 900.0
    assert halved_at is not None


def test_criterion_6_ablation_trend(task):
    def run_variant(seed, use_contexts):
        model = GroundingModel(ModelConfig(use_contexts=use_contexts), seed=seed)
        train(
            model, task["train"],
            TrainConfig(learning_rate=8e-4, batch_size=8, epochs=6, seed=seed),
        )
        return evaluate_recall(model, task["test"], 1, 0.7)

    seeds = (0, 1, 2)
    full = [run_variant(s, True) for s in seeds]
    ablated = [run_variant(s, False) for s in seeds]
    med_full = statistics.median(full)
    med_ablated = statistics.median(ablated)
    passed = med_full >= med_ablated
    verdict(
        6, "ablation trend", passed,
        f"test R@1,IoU=0.7 medians over seeds {seeds}: full {med_full:.1f} "
        f"(runs {[f'{v:.1f}' for v in full]}), contexts disabled {med_ablated:.1f} "
        f"(runs {[f'{v:.1f}' for v in ablated]})",
    )
    assert med_full >= med_ablated


def test_criterion_7_metric_correctness():
    from spanloc.supervision import Segment

    preds = [
        [(Segment(0, 3), 0.9)],
        [(Segment(0, 3), 0.9)],
        [(Segment(4, 7), 0.8)],
        [(Segment(0, 0), 0.8)],
    ]
    gts = [Segment(0, 3), Segment(2, 5), Segment(4, 6), Segment(5, 9)]
    fixture_ok = recall_at(preds, gts, 1, 0.5) == 50.0

    rng = np.random.default_rng(7)
    monotone = True
    for _ in range(100):
        frames = int(rng.integers(4, 12))
        score_map = rng.random((frames, frames))
        gt = Segment(*sorted(rng.integers(0, frames, size=2)))
        sample_preds = [top_n_segments(score_map, 5, nms_iou=0.6)]
        by_n = [recall_at(sample_preds, [gt], n, 0.5) for n in (1, 2, 5)]
        by_m = [recall_at(sample_preds, [gt], 5, m) for m in (0.3, 0.5, 0.7)]
        monotone &= by_n == sorted(by_n) and by_m == sorted(by_m, reverse=True)
    passed = fixture_ok and monotone
    verdict(
        7, "metric correctness", passed,
        f"4-sample fixture exact: {fixture_ok}; monotone over 100 random fixtures: {monotone}",
    )
    assert passed


def test_criterion_8_reproducibility(tmp_path):
    small = [
        "--set", "data.count=24",
        "--set", "train.epochs=2",
        "--set", "train.batch_size=4",
    ]

    def one_round(tag):
        root = tmp_path / tag
        assert cli_run(["generate", "--seed", "11", "--out", str(root), *small]) == 0
        data = str(root / "dataset")
        assert cli_run(["train", "--seed", "11", "--data", data, "--out", str(root), *small]) == 0
        assert cli_run([
            "eval", "--seed", "11", "--data", data, "--out", str(root),
            "--checkpoint", str(root / "checkpoint.bin"), *small,
        ]) == 0
        return root

    a = one_round("a")
    b = one_round("b")
    same = {
        "dataset.json": (a / "dataset.json").read_bytes() == (b / "dataset.json").read_bytes(),
        "dataset.bin": (a / "dataset.bin").read_bytes() == (b / "dataset.bin").read_bytes(),
        "loss_trace.csv": (a / "loss_trace.csv").read_bytes() == (b / "loss_trace.csv").read_bytes(),
        "checkpoint.bin": (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes(),
        "metrics.json": (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes(),
    }
    passed = all(same.values())
    verdict(
        8, "reproducibility", passed,
        "byte-identical across two runs: " + ", ".join(f"{k}={v}" for k, v in same.items()),
    )
    assert passed

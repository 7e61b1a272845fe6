"""Command-line harness: generate, train, eval, score, gradcheck."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import generate_dataset, load_dataset, save_dataset
from .errors import DataError, SpanlocError
from .evaluation import (
    format_report_lines,
    metric_report,
    segment_to_timestamps,
    top_n_segments,
)
from .gradcheck import run_battery
from .model import GroundingModel
from .plots import save_loss_curve, save_metric_bars, save_score_map
from .training import load_checkpoint, save_checkpoint, train, write_loss_trace

GRADCHECK_TOL = 1e-4


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", metavar="PATH", help="JSON config with dotted keys")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--out", metavar="DIR", default="out", help="output directory")
    sp.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanloc",
        description="Temporal grounding by scoring all start/end frame pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True, metavar="BASE", help="dataset base path")

    p = sub.add_parser("eval", help="report R@n / IoU metrics on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True, metavar="BASE")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--n", metavar="N[,N...]", help="top-n values, e.g. 1,5")
    p.add_argument("--iou", metavar="M[,M...]", help="IoU thresholds, e.g. 0.3,0.5,0.7")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")

    p = sub.add_parser("score", help="score one sample and print the best segment")
    _add_common(p)
    p.add_argument("--data", required=True, metavar="BASE")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--dump-map", dest="dump_map", metavar="PATH", help="write the score map as CSV")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    _add_common(p)

    return parser


def _load_config(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _build_model(cfg: dict, checkpoint: str | None) -> GroundingModel:
    if checkpoint:
        model, _ = load_checkpoint(checkpoint)
        return model
    return GroundingModel(cfgmod.model_config(cfg), seed=cfg["seed"])


def _parse_list(raw: str | None, cast, fallback):
    if raw is None:
        return list(fallback)
    return [cast(part) for part in str(raw).split(",") if part]


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    spec = cfgmod.synthetic_spec(cfg)
    examples = generate_dataset(spec, cfg["data.count"], cfg["data.start_index"])
    manifest, payload = save_dataset(examples, Path(args.out) / "dataset")
    print(f"wrote {len(examples)} examples: {manifest} + {payload}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(args.data)
    model = GroundingModel(cfgmod.model_config(cfg), seed=cfg["seed"])
    result = train(model, examples, cfgmod.train_config(cfg), log_every=1)
    out = Path(args.out)
    trace = write_loss_trace(result, out / "loss_trace.csv")
    curve = save_loss_curve(result.steps, result.losses, out / "loss_trace.png")
    ckpt = save_checkpoint(out / "checkpoint.bin", model, seed=cfg["seed"])
    print(f"final epoch mean loss {result.epoch_means[-1]:.4f}")
    print(f"wrote {ckpt}, {trace}, {curve}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(args.data)
    model = _build_model(cfg, args.checkpoint)
    top_ns = _parse_list(args.n, int, cfg["eval.n"])
    thresholds = _parse_list(args.iou, float, cfg["eval.iou"])
    nms_iou = args.nms_iou if args.nms_iou is not None else cfg["eval.nms_iou"]
    predictions = [
        top_n_segments(model.score(ex.features, ex.tokens).data, max(top_ns), nms_iou)
        for ex in examples
    ]
    report = metric_report(
        predictions,
        [ex.gt for ex in examples],
        top_ns,
        thresholds,
        strict=cfg["eval.strict_iou"],
    )
    for line in format_report_lines(report):
        print(line)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    figure = save_metric_bars(report, out / "metrics.png")
    print(f"wrote {out / 'metrics.json'}, {figure}")
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args)
    examples = load_dataset(args.data)
    if not 0 <= args.index < len(examples):
        raise DataError(f"sample index {args.index} outside dataset of {len(examples)}")
    ex = examples[args.index]
    model = _build_model(cfg, args.checkpoint)
    nms_iou = args.nms_iou if args.nms_iou is not None else cfg["eval.nms_iou"]
    score_map = model.score(ex.features, ex.tokens).data
    (best, value), *_ = top_n_segments(score_map, 1, nms_iou)
    frames = score_map.shape[0]
    t_start, t_end = segment_to_timestamps(best, frames, ex.duration_s)
    print(f"best segment: frames ({best.start}, {best.end})")
    print(f"timestamps:   ({t_start:.3f} s, {t_end:.3f} s) of {ex.duration_s:.3f} s")
    print(f"score:        {value:.6f}")
    print(f"ground truth: frames ({ex.gt.start}, {ex.gt.end})")
    if args.dump_map:
        csv_path = Path(args.dump_map)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(csv_path, score_map, fmt="%.10g", delimiter=",")
        figure = save_score_map(score_map, csv_path.with_suffix(".png"), gt=ex.gt, best=best)
        print(f"wrote {csv_path}, {figure}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    battery = run_battery(seed=cfg["seed"])
    all_pass = True
    for group, entries in battery.items():
        worst_name, worst = max(entries, key=lambda e: e[1])
        ok = worst < GRADCHECK_TOL
        all_pass &= ok
        status = "ok" if ok else "FAIL"
        print(
            f"{group}: max rel err {worst:.3e} over {len(entries)} checks "
            f"(worst at {worst_name}) [{status}]"
        )
    return 0 if all_pass else 1


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "score": cmd_score,
    "gradcheck": cmd_gradcheck,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (SpanlocError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

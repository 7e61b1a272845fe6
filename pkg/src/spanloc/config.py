"""Flat run configuration with dotted keys.

A config file is a single JSON object whose keys are dotted paths such as
``model.d_model`` or ``train.learning_rate``; values may be scalars or short
lists. Command-line ``--set key=value`` overrides parse the value as JSON
when possible. Unknown keys are rejected so typos cannot silently fall back
to defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from .data import SyntheticSpec
from .errors import ConfigError
from .model import ModelConfig
from .optim import TrainConfig

DEFAULTS: dict = {
    "seed": 0,
    "model.d_model": 32,
    "model.hidden": 16,
    "model.d_video_in": 16,
    "model.vocab_size": 64,
    "model.max_t": 64,
    "model.max_n": 16,
    "model.d_boundary": 32,
    "model.d_context": 32,
    "model.local_scales": [1, 3, 5],
    "model.global_scales": [1, 2, 4],
    "model.dropout": 0.1,
    "model.sigmoid_per_head": False,
    "model.use_contexts": True,
    "train.learning_rate": 8e-4,
    "train.batch_size": 8,
    "train.epochs": 30,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.mask_invalid": False,
    "eval.n": [1, 5],
    "eval.iou": [0.3, 0.5, 0.7],
    "eval.nms_iou": 0.5,
    "eval.strict_iou": False,
    "data.frames": 32,
    "data.d_video_in": 16,
    "data.vocab_size": 64,
    "data.noise": 0.3,
    "data.query_len": [3, 6],
    "data.segment_len": [4, 12],
    "data.count": 512,
    "data.start_index": 0,
}


def load_config(path: str | Path | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            overlay = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(overlay, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for key, value in overlay.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            cfg[key] = value
    return cfg


def apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            cfg[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg[key] = raw
    return cfg


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        d_model=cfg["model.d_model"],
        hidden=cfg["model.hidden"],
        d_video_in=cfg["model.d_video_in"],
        vocab_size=cfg["model.vocab_size"],
        max_t=cfg["model.max_t"],
        max_n=cfg["model.max_n"],
        d_boundary=cfg["model.d_boundary"],
        d_context=cfg["model.d_context"],
        local_scales=tuple(cfg["model.local_scales"]),
        global_scales=tuple(cfg["model.global_scales"]),
        dropout=cfg["model.dropout"],
        sigmoid_per_head=cfg["model.sigmoid_per_head"],
        use_contexts=cfg["model.use_contexts"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["train.learning_rate"],
        batch_size=cfg["train.batch_size"],
        epochs=cfg["train.epochs"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps=cfg["train.eps"],
        seed=cfg["seed"],
        mask_invalid=cfg["train.mask_invalid"],
    )


def synthetic_spec(cfg: dict) -> SyntheticSpec:
    return SyntheticSpec(
        frames=cfg["data.frames"],
        d_video_in=cfg["data.d_video_in"],
        vocab_size=cfg["data.vocab_size"],
        noise=cfg["data.noise"],
        query_len=tuple(cfg["data.query_len"]),
        segment_len=tuple(cfg["data.segment_len"]),
        seed=cfg["seed"],
    )

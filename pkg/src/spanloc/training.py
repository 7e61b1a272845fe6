"""Training loop and checkpoint IO.

Each batch element runs forward/backward on its own tape; gradients sum into
the shared parameter store and one Adam step follows per batch. A checkpoint
is a single file: one JSON header line (config, seed, parameter names and
shapes) terminated by a newline, then the raw little-endian float64 payload
of every parameter in header order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import GroundingExample
from .errors import DataError, FormatError
from .model import GroundingModel, ModelConfig
from .optim import TrainConfig, adam_step
from .supervision import bce_loss, build_supervision
from .tensor import Tape

CHECKPOINT_VERSION = 1


@dataclass
class TrainResult:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    epoch_means: list[float] = field(default_factory=list)

    def rows(self) -> list[tuple[int, float]]:
        return list(zip(self.steps, self.losses))


def train(
    model: GroundingModel,
    examples: list[GroundingExample],
    config: TrainConfig,
    log_every: int = 0,
) -> TrainResult:
    """Optimize the model on the examples; returns the per-step loss trace."""
    config.validate()
    if not examples:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    targets = [
        build_supervision(ex.gt, ex.features.shape[0]) for ex in examples
    ]
    result = TrainResult()
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            model.store.zero_grads()
            scale = 1.0 / len(batch)
            batch_loss = 0.0
            for j in batch:
                ex = examples[j]
                with Tape() as tape:
                    scores = model.score(ex.features, ex.tokens, training=True, rng=rng)
                    loss = bce_loss(scores, targets[j], config.mask_invalid)
                    scaled = loss * scale
                tape.backward(scaled)
                batch_loss += loss.item() * scale
            adam_step(model.store, model.store.gradients(), config)
            step += 1
            result.steps.append(step)
            result.losses.append(batch_loss)
            epoch_losses.append(batch_loss)
        result.epoch_means.append(float(np.mean(epoch_losses)))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{config.epochs}  mean loss {result.epoch_means[-1]:.4f}")
    return result


def write_loss_trace(result: TrainResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,loss"]
    lines += [f"{s},{l:.10f}" for s, l in result.rows()]
    path.write_text("\n".join(lines) + "\n")
    return path


def save_checkpoint(path, model: GroundingModel, seed: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = model.store.names()
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "config": model.config.to_dict(),
        "parameters": [
            {"name": name, "shape": list(model.store[name].data.shape)} for name in names
        ],
    }
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(model.store[name].data, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[GroundingModel, int]:
    """Rebuild a model from a checkpoint; returns (model, stored seed)."""
    path = Path(path)
    blob = path.read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise FormatError(f"{path}: malformed header: {err}") from err
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    seed = int(header.get("seed", 0))
    model = GroundingModel(ModelConfig.from_dict(header["config"]), seed=seed)
    offset = newline + 1
    for entry in header["parameters"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in model.store:
            raise FormatError(f"{path}: unknown parameter {name} in header")
        param = model.store[name]
        if param.data.shape != shape:
            raise FormatError(
                f"{path}: parameter {name} has shape {shape} in header, "
                f"expected {param.data.shape}"
            )
        nbytes = param.data.size * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(
                f"{path}: payload for {name} needs bytes [{offset}, {offset + nbytes}) "
                f"but file ends at {len(blob)}"
            )
        param.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after payload")
    return model, seed

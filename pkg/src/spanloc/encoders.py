"""Sequence encoders: sinusoidal positions plus bidirectional recurrence.

Raw per-frame features and token ids are both mapped to the shared model
width D by: input projection (or embedding lookup), additive positional
encoding, a bidirectional GRU, and a linear projection of the concatenated
directions back to D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError, VocabularyError
from .params import ParameterStore
from .tensor import (
    Tensor,
    concat,
    gru_scan,
    lstm_scan,
    matmul,
    slice_axis,
    take_rows,
    tensor,
)


def positional_encoding(length: int, width: int) -> np.ndarray:
    """Sinusoidal position table: sin on even columns, cos on odd columns."""
    if width % 2 != 0:
        raise ConfigError(f"positional encoding width must be even, got {width}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    freqs = np.power(10000.0, -np.arange(0, width, 2, dtype=np.float64) / width)
    table = np.zeros((length, width), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * freqs)
    table[:, 1::2] = np.cos(positions * freqs)
    return table


@dataclass
class RecurrentCell:
    """One direction of a GRU or LSTM with fused gate weights.

    GRU gates: update and reset from one (d_in+H) x 2H matrix, candidate via
    tanh from a second (d_in+H) x H matrix. LSTM gates: input/forget/output
    plus cell candidate from one (d_in+H) x 4H matrix. The initial state is
    zero in both directions.
    """

    kind: str
    hidden: int
    gate_weight: Tensor
    gate_bias: Tensor
    cand_weight: Tensor | None = None
    cand_bias: Tensor | None = None

    def scan(self, x: Tensor, reverse: bool = False) -> Tensor:
        """Hidden states for every row of x, aligned with the input rows."""
        zero = tensor(np.zeros(self.hidden))
        if self.kind == "gru":
            return gru_scan(
                x, zero,
                self.gate_weight, self.gate_bias,
                self.cand_weight, self.cand_bias,
                reverse=reverse,
            )
        hc = lstm_scan(x, zero, tensor(np.zeros(self.hidden)),
                       self.gate_weight, self.gate_bias, reverse=reverse)
        return slice_axis(hc, 1, 0, self.hidden)


def make_cell(
    store: ParameterStore,
    prefix: str,
    kind: str,
    d_in: int,
    hidden: int,
    rng: np.random.Generator,
) -> RecurrentCell:
    if kind not in ("gru", "lstm"):
        raise ConfigError(f"unknown recurrent cell kind: {kind}")
    if kind == "gru":
        return RecurrentCell(
            kind,
            hidden,
            gate_weight=store.weight(f"{prefix}.gate_weight", (d_in + hidden, 2 * hidden), rng),
            gate_bias=store.bias(f"{prefix}.gate_bias", (2 * hidden,)),
            cand_weight=store.weight(f"{prefix}.cand_weight", (d_in + hidden, hidden), rng),
            cand_bias=store.bias(f"{prefix}.cand_bias", (hidden,)),
        )
    return RecurrentCell(
        kind,
        hidden,
        gate_weight=store.weight(f"{prefix}.gate_weight", (d_in + hidden, 4 * hidden), rng),
        gate_bias=store.bias(f"{prefix}.gate_bias", (4 * hidden,)),
    )


def birnn_forward(x: Tensor, fwd: RecurrentCell, bwd: RecurrentCell) -> Tensor:
    """Scan both directions over the rows of x; returns T x 2H."""
    if x.shape[0] == 0:
        raise DimensionError("birnn_forward on an empty sequence")
    return concat([fwd.scan(x), bwd.scan(x, reverse=True)], axis=1)


@dataclass
class EncoderConfig:
    d_model: int = 32
    d_video_in: int = 16
    hidden: int = 16
    vocab_size: int = 64
    max_t: int = 64
    max_n: int = 16

    def validate(self) -> None:
        if self.d_model % 2 != 0:
            raise ConfigError(f"d_model must be even, got {self.d_model}")
        if self.max_t < 2:
            raise ConfigError(f"max_t must be at least 2, got {self.max_t}")
        if self.vocab_size < 1:
            raise ConfigError(f"vocab_size must be positive, got {self.vocab_size}")


class VideoEncoder:
    """Project raw frame features to D, add positions, run a BiGRU."""

    def __init__(self, config: EncoderConfig, store: ParameterStore, rng: np.random.Generator):
        config.validate()
        self.config = config
        d, h = config.d_model, config.hidden
        self.input_weight = store.weight("video_encoder.input_proj.weight", (config.d_video_in, d), rng)
        self.input_bias = store.bias("video_encoder.input_proj.bias", (d,))
        self.fwd = make_cell(store, "video_encoder.gru_fwd", "gru", d, h, rng)
        self.bwd = make_cell(store, "video_encoder.gru_bwd", "gru", d, h, rng)
        self.output_weight = store.weight("video_encoder.output_proj.weight", (2 * h, d), rng)
        self.output_bias = store.bias("video_encoder.output_proj.bias", (d,))
        self.positions = positional_encoding(config.max_t, d)

    def __call__(self, features: np.ndarray) -> Tensor:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.d_video_in:
            raise DimensionError(
                f"expected frame features of width {self.config.d_video_in}, "
                f"got shape {features.shape}"
            )
        frames = features.shape[0]
        if frames > self.config.max_t:
            raise DataError(
                f"sequence of {frames} frames exceeds max_t={self.config.max_t}; "
                f"truncate or subsample before encoding"
            )
        x = matmul(tensor(features), self.input_weight) + self.input_bias
        x = x + tensor(self.positions[:frames])
        h = birnn_forward(x, self.fwd, self.bwd)
        return matmul(h, self.output_weight) + self.output_bias


class QueryEncoder:
    """Embed token ids, add positions, run a BiGRU."""

    def __init__(self, config: EncoderConfig, store: ParameterStore, rng: np.random.Generator):
        config.validate()
        self.config = config
        d, h = config.d_model, config.hidden
        self.embedding = store.weight("query_encoder.embedding", (config.vocab_size, d), rng)
        self.fwd = make_cell(store, "query_encoder.gru_fwd", "gru", d, h, rng)
        self.bwd = make_cell(store, "query_encoder.gru_bwd", "gru", d, h, rng)
        self.output_weight = store.weight("query_encoder.output_proj.weight", (2 * h, d), rng)
        self.output_bias = store.bias("query_encoder.output_proj.bias", (d,))
        self.positions = positional_encoding(config.max_n, d)

    def __call__(self, tokens) -> Tensor:
        ids = list(int(t) for t in tokens)
        if not 1 <= len(ids) <= self.config.max_n:
            raise DimensionError(
                f"query length {len(ids)} outside [1, {self.config.max_n}]"
            )
        bad = [i for i in ids if not 0 <= i < self.config.vocab_size]
        if bad:
            raise VocabularyError(
                f"token ids {bad} outside vocabulary of size {self.config.vocab_size}"
            )
        x = take_rows(self.embedding, ids) + tensor(self.positions[: len(ids)])
        h = birnn_forward(x, self.fwd, self.bwd)
        return matmul(h, self.output_weight) + self.output_bias

"""Score every (start, end) frame pair of a video against the query.

The fused sequence is first aggregated by a BiLSTM. Each scoring head owns
one local window size: per frame it gathers the window rows (zero-padded at
the edges, kept distinct rather than pooled), refines max-pooled global
snippet banks with an attention block, lets the refined bank re-weight the
local rows with a second attention block, and projects the combined context
to a fixed width. Frame features concatenated with their context go through
separate start/end projections and a bilinear-plus-linear pair score. Head
logits are averaged and squashed once, yielding a T x T map of scores in
(0, 1) where cell (s, e) rates the segment from frame s to frame e.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .params import ParameterStore
from .tensor import (
    Tensor,
    concat,
    dropout,
    layer_norm,
    matmul,
    ones,
    reduce_max,
    reduce_mean,
    reshape,
    sigmoid,
    slice_axis,
    softmax,
    zeros,
)
from .encoders import birnn_forward, make_cell


@dataclass
class ContextConfig:
    """Window sizes for the local and global context banks."""

    local_scales: tuple[int, ...] = (1, 3, 5)
    global_scales: tuple[int, ...] = (1, 2, 4)
    d_context: int = 32

    def validate(self) -> None:
        for k in self.local_scales:
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"local scales must be odd and >= 1, got {k}")
        for k in self.global_scales:
            if k < 1:
                raise ConfigError(f"global scales must be >= 1, got {k}")
        if not self.local_scales:
            raise ConfigError("at least one local scale is required")


@dataclass
class NlBlockParams:
    query_proj: Tensor
    key_proj: Tensor
    value_proj: Tensor
    output_proj: Tensor
    norm_gain: Tensor
    norm_bias: Tensor


def make_nl_block(
    store: ParameterStore, prefix: str, width: int, rng: np.random.Generator
) -> NlBlockParams:
    return NlBlockParams(
        query_proj=store.weight(f"{prefix}.query_proj", (width, width), rng),
        key_proj=store.weight(f"{prefix}.key_proj", (width, width), rng),
        value_proj=store.weight(f"{prefix}.value_proj", (width, width), rng),
        output_proj=store.weight(f"{prefix}.output_proj", (width, width), rng),
        norm_gain=store.gain(f"{prefix}.norm_gain", (width,)),
        norm_bias=store.bias(f"{prefix}.norm_bias", (width,)),
    )


def nl_block(
    keys: Tensor,
    queries: Tensor,
    params: NlBlockParams,
    rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Attention from each query row over the key rows, with residual,
    dropout, and layer normalization. Query rows are independent of each
    other, so stacking query sets is equivalent to separate calls."""
    if keys.shape[0] == 0:
        raise DimensionError("attention over an empty context bank")
    if keys.shape[1] != queries.shape[1]:
        raise DimensionError(
            f"key width {keys.shape} does not match query width {queries.shape}"
        )
    q = matmul(queries, params.query_proj)
    k = matmul(keys, params.key_proj)
    v = matmul(keys, params.value_proj)
    weights = softmax(matmul(q, k.T), axis=1)
    message = matmul(matmul(weights, v), params.output_proj)
    message = dropout(message, rate, training, rng)
    return layer_norm(queries + message, params.norm_gain, params.norm_bias)


def local_context(seq: Tensor, t: int, window: int) -> Tensor:
    """The window rows centered on frame t, zero rows outside [0, T)."""
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"local window must be odd and >= 1, got {window}")
    frames, width = seq.shape
    if not 0 <= t < frames:
        raise DimensionError(f"frame {t} outside [0, {frames})")
    half = window // 2
    rows = []
    for j in range(t - half, t + half + 1):
        rows.append(seq[j : j + 1] if 0 <= j < frames else zeros((1, width)))
    return concat(rows, axis=0)


def global_spans(seq: Tensor, span: int) -> Tensor:
    """Bank of per-snippet maxima over consecutive spans of `span` frames.

    A trailing snippet shorter than `span` pools only its valid frames, which
    matches right-padding with values excluded from the max.
    """
    frames, width = seq.shape
    if span < 1 or span > frames:
        raise ConfigError(f"global span {span} outside [1, {frames}]")
    if span == 1:
        return seq
    full = frames // span
    parts = []
    if full:
        head = seq if full * span == frames else slice_axis(seq, 0, 0, full * span)
        parts.append(reduce_max(reshape(head, (full, span, width)), axis=1))
    if frames % span:
        tail = slice_axis(seq, 0, full * span, frames)
        parts.append(reduce_max(tail, axis=0, keepdims=True))
    return parts[0] if len(parts) == 1 else concat(parts, axis=0)


@dataclass
class ScalePair:
    self_block: NlBlockParams
    cross_block: NlBlockParams


class BiaffineHead:
    """One scoring head: context builder for a single local scale plus the
    start/end projections and the pair-scoring form."""

    def __init__(
        self,
        store: ParameterStore,
        prefix: str,
        d_model: int,
        d_boundary: int,
        local_scale: int | None,
        global_scales: tuple[int, ...],
        d_context: int,
        dropout_rate: float,
        rng: np.random.Generator,
    ):
        self.local_scale = local_scale
        self.global_scales = global_scales
        self.d_model = d_model
        self.dropout_rate = dropout_rate
        self.scale_pairs: list[ScalePair] = []
        if local_scale is not None:
            for g in global_scales:
                self.scale_pairs.append(
                    ScalePair(
                        self_block=make_nl_block(store, f"{prefix}.global{g}.self_block", d_model, rng),
                        cross_block=make_nl_block(store, f"{prefix}.global{g}.cross_block", d_model, rng),
                    )
                )
            ctx_in = len(global_scales) * (local_scale * d_model + d_model)
            self.context_weight = store.weight(f"{prefix}.context_proj.weight", (ctx_in, d_context), rng)
            self.context_bias = store.bias(f"{prefix}.context_proj.bias", (d_context,))
            feat_width = d_model + d_context
        else:
            feat_width = d_model
        self.start_weight = store.weight(f"{prefix}.start_proj.weight", (feat_width, d_boundary), rng)
        self.start_bias = store.bias(f"{prefix}.start_proj.bias", (d_boundary,))
        self.end_weight = store.weight(f"{prefix}.end_proj.weight", (feat_width, d_boundary), rng)
        self.end_bias = store.bias(f"{prefix}.end_proj.bias", (d_boundary,))
        self.bilinear = store.weight(f"{prefix}.bilinear", (d_boundary, d_boundary), rng)
        self.pair_weight = store.weight(f"{prefix}.pair_weight", (d_boundary, 1), rng)
        self.pair_bias = store.bias(f"{prefix}.pair_bias", ())

    def _stacked_windows(self, seq: Tensor) -> Tensor:
        """All local windows as one (T * k) x D matrix of query rows."""
        frames, width = seq.shape
        k = self.local_scale
        half = k // 2
        if half:
            padded = concat([zeros((half, width)), seq, zeros((half, width))], axis=0)
        else:
            padded = seq
        shifted = [slice_axis(padded, 0, j, j + frames) for j in range(k)]
        return reshape(concat(shifted, axis=1), (frames * k, width))

    def build_contexts(
        self, seq: Tensor, training: bool, rng: np.random.Generator | None
    ) -> Tensor:
        """Per-frame context vectors, T x d_context."""
        frames, width = seq.shape
        k = self.local_scale
        local_rows = self._stacked_windows(seq)
        parts = []
        for g, pair in zip(self.global_scales, self.scale_pairs):
            bank = global_spans(seq, min(g, frames))
            refined = nl_block(bank, bank, pair.self_block, self.dropout_rate, training, rng)
            local_ref = nl_block(refined, local_rows, pair.cross_block, self.dropout_rate, training, rng)
            summary = reduce_mean(refined, axis=0, keepdims=True)
            parts.append(reshape(local_ref, (frames, k * width)))
            parts.append(matmul(ones((frames, 1)), summary))
        ctx = concat(parts, axis=1)
        return matmul(ctx, self.context_weight) + self.context_bias

    def pair_logits(self, feats: Tensor) -> Tensor:
        """Logit grid: bilinear start/end interaction plus additive term."""
        frames = feats.shape[0]
        h_start = matmul(feats, self.start_weight) + self.start_bias
        h_end = matmul(feats, self.end_weight) + self.end_bias
        bilinear = matmul(matmul(h_start, self.bilinear), h_end.T)
        a = matmul(h_start, self.pair_weight)
        b = matmul(h_end, self.pair_weight)
        additive = matmul(a, ones((1, frames))) + matmul(ones((frames, 1)), b.T)
        return bilinear + additive + self.pair_bias

    def logits(self, seq: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
        if self.local_scale is None:
            return self.pair_logits(seq)
        ctx = self.build_contexts(seq, training, rng)
        return self.pair_logits(concat([seq, ctx], axis=1))


def biaffine_score(h_start: Tensor, h_end: Tensor, head: BiaffineHead) -> Tensor:
    """Scalar pair logit for single boundary rows (1 x d_boundary each)."""
    bil = matmul(matmul(h_start, head.bilinear), h_end.T)
    additive = matmul(h_start + h_end, head.pair_weight)
    return reshape(bil + additive + head.pair_bias, ())


class SpanScorer:
    """BiLSTM aggregation plus one biaffine head per local scale."""

    def __init__(
        self,
        d_model: int,
        hidden: int,
        d_boundary: int,
        context: ContextConfig,
        dropout_rate: float,
        sigmoid_per_head: bool,
        use_contexts: bool,
        store: ParameterStore,
        rng: np.random.Generator,
    ):
        context.validate()
        self.d_model = d_model
        self.sigmoid_per_head = sigmoid_per_head
        self.lstm_fwd = make_cell(store, "localizer.sequence_lstm_fwd", "lstm", 2 * d_model, hidden, rng)
        self.lstm_bwd = make_cell(store, "localizer.sequence_lstm_bwd", "lstm", 2 * d_model, hidden, rng)
        self.seq_weight = store.weight("localizer.sequence_proj.weight", (2 * hidden, d_model), rng)
        self.seq_bias = store.bias("localizer.sequence_proj.bias", (d_model,))
        self.heads: list[BiaffineHead] = []
        if use_contexts:
            for i, k in enumerate(context.local_scales):
                self.heads.append(
                    BiaffineHead(
                        store,
                        f"localizer.head{i}",
                        d_model,
                        d_boundary,
                        k,
                        context.global_scales,
                        context.d_context,
                        dropout_rate,
                        rng,
                    )
                )
        else:
            self.heads.append(
                BiaffineHead(
                    store, "localizer.head0", d_model, d_boundary,
                    None, (), 0, dropout_rate, rng,
                )
            )

    def aggregate_sequence(self, fused: Tensor) -> Tensor:
        """BiLSTM over the fused T x 2D sequence, projected back to T x D."""
        if fused.shape[1] != 2 * self.d_model:
            raise DimensionError(
                f"expected fused width {2 * self.d_model}, got {fused.shape}"
            )
        h = birnn_forward(fused, self.lstm_fwd, self.lstm_bwd)
        return matmul(h, self.seq_weight) + self.seq_bias

    def score_map(
        self, fused: Tensor, training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        """T x T matching scores in (0, 1); cell (s, e) rates segment (s, e)."""
        if fused.shape[0] < 2:
            raise DimensionError(
                f"scoring needs at least 2 frames, got {fused.shape[0]}"
            )
        seq = self.aggregate_sequence(fused)
        per_head = [head.logits(seq, training, rng) for head in self.heads]
        if self.sigmoid_per_head:
            total = None
            for logit in per_head:
                scored = sigmoid(logit)
                total = scored if total is None else total + scored
            return total * (1.0 / len(per_head))
        total = per_head[0]
        for logit in per_head[1:]:
            total = total + logit
        return sigmoid(total * (1.0 / len(per_head)))

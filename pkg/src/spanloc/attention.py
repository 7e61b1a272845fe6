"""Query-guided video fusion via per-word self-attention over time.

Each word is concatenated onto every frame, a single-head self-attention
(unscaled dot-product logits) runs over the T fused rows, a linear output
projection is added back as a residual, and the per-word results are
averaged. One projection set is shared by all words, which makes the output
invariant to duplicating words in the query.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .params import ParameterStore
from .tensor import Tensor, concat, matmul, ones, softmax


class WordVideoFusion:
    def __init__(self, d_model: int, store: ParameterStore, rng: np.random.Generator):
        width = 2 * d_model
        self.d_model = d_model
        self.query_proj = store.weight("attention.query_proj", (width, width), rng)
        self.key_proj = store.weight("attention.key_proj", (width, width), rng)
        self.value_proj = store.weight("attention.value_proj", (width, width), rng)
        self.output_proj = store.weight("attention.output_proj", (width, width), rng)

    def fuse_word(self, video: Tensor, word_row: Tensor) -> Tensor:
        """Attend over time for a single word; returns T x 2D."""
        frames = video.shape[0]
        if word_row.shape != (1, self.d_model) or video.shape[1] != self.d_model:
            raise DimensionError(
                f"fuse_word: video {video.shape} and word {word_row.shape} "
                f"must both have width {self.d_model}"
            )
        fused = concat([video, matmul(ones((frames, 1)), word_row)], axis=1)
        q = matmul(fused, self.query_proj)
        k = matmul(fused, self.key_proj)
        v = matmul(fused, self.value_proj)
        weights = softmax(matmul(q, k.T), axis=1)
        return matmul(matmul(weights, v), self.output_proj) + fused

    def __call__(self, video: Tensor, query: Tensor) -> Tensor:
        """Average the per-word attention outputs; returns T x 2D."""
        num_words = query.shape[0]
        if num_words == 0:
            raise DimensionError("fusion requires at least one query word")
        total = None
        for n in range(num_words):
            out = self.fuse_word(video, query[n : n + 1])
            total = out if total is None else total + out
        return total * (1.0 / num_words)

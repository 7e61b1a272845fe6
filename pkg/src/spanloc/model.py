"""Full grounding model: encoders, word-video fusion, and span scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import WordVideoFusion
from .encoders import EncoderConfig, QueryEncoder, VideoEncoder
from .errors import ConfigError
from .localizer import ContextConfig, SpanScorer
from .params import ParameterStore
from .tensor import Tensor


@dataclass
class ModelConfig:
    d_model: int = 32
    hidden: int = 16
    d_video_in: int = 16
    vocab_size: int = 64
    max_t: int = 64
    max_n: int = 16
    d_boundary: int = 32
    d_context: int = 32
    local_scales: tuple[int, ...] = (1, 3, 5)
    global_scales: tuple[int, ...] = (1, 2, 4)
    dropout: float = 0.1
    sigmoid_per_head: bool = False
    use_contexts: bool = True

    def validate(self) -> None:
        if self.dropout < 0 or self.dropout >= 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        self.encoder_config().validate()
        self.context_config().validate()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            d_model=self.d_model,
            d_video_in=self.d_video_in,
            hidden=self.hidden,
            vocab_size=self.vocab_size,
            max_t=self.max_t,
            max_n=self.max_n,
        )

    def context_config(self) -> ContextConfig:
        return ContextConfig(
            local_scales=tuple(self.local_scales),
            global_scales=tuple(self.global_scales),
            d_context=self.d_context,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["local_scales"] = list(self.local_scales)
        d["global_scales"] = list(self.global_scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kwargs = dict(d)
        for key in ("local_scales", "global_scales"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


class GroundingModel:
    """Stateless forward passes over a shared parameter store."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        enc = config.encoder_config()
        self.video_encoder = VideoEncoder(enc, self.store, rng)
        self.query_encoder = QueryEncoder(enc, self.store, rng)
        self.fusion = WordVideoFusion(config.d_model, self.store, rng)
        self.scorer = SpanScorer(
            d_model=config.d_model,
            hidden=config.hidden,
            d_boundary=config.d_boundary,
            context=config.context_config(),
            dropout_rate=config.dropout,
            sigmoid_per_head=config.sigmoid_per_head,
            use_contexts=config.use_contexts,
            store=self.store,
            rng=rng,
        )

    def fuse(self, features: np.ndarray, tokens) -> Tensor:
        video = self.video_encoder(features)
        query = self.query_encoder(tokens)
        return self.fusion(video, query)

    def score(
        self,
        features: np.ndarray,
        tokens,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """T x T score map in (0, 1) for one video/query pair."""
        return self.scorer.score_map(self.fuse(features, tokens), training, rng)

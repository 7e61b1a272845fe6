"""Temporal sentence grounding via biaffine span scoring.

A self-contained float64 autodiff core drives the full pipeline: sequence
encoders, query-guided video fusion, biaffine span scoring with local and
global contexts, scaled-IoU supervision, Adam training, and recall-based
evaluation.
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    MetricError,
    SpanlocError,
    TrainingError,
    VocabularyError,
)
from .model import GroundingModel, ModelConfig
from .supervision import Segment
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "FormatError",
    "GroundingModel",
    "MetricError",
    "ModelConfig",
    "Segment",
    "SpanlocError",
    "Tape",
    "Tensor",
    "TrainingError",
    "VocabularyError",
    "__version__",
]

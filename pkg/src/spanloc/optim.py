"""Adam with bias correction over a parameter store."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TrainingError
from .params import ParameterStore


@dataclass
class TrainConfig:
    learning_rate: float = 8e-4
    batch_size: int = 8
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    mask_invalid: bool = False

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    config: TrainConfig,
) -> None:
    """One in-place update; moments and step counts live in the store."""
    config.validate()
    for name, param in store.params.items():
        if name not in grads:
            raise TrainingError(f"missing gradient for parameter {name}")
        g = grads[name]
        if np.isnan(g).any() or np.isinf(g).any():
            raise TrainingError(f"non-finite gradient for parameter {name}")
        state = store.adam[name]
        state.step += 1
        state.m = config.beta1 * state.m + (1.0 - config.beta1) * g
        state.v = config.beta2 * state.v + (1.0 - config.beta2) * g * g
        m_hat = state.m / (1.0 - config.beta1 ** state.step)
        v_hat = state.v / (1.0 - config.beta2 ** state.step)
        param.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)

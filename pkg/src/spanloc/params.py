"""Named trainable parameters with per-parameter Adam state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class ParameterStore:
    """Uniquely named parameters plus the optimizer state that shadows them."""

    params: dict[str, Tensor] = field(default_factory=dict)
    adam: dict[str, AdamState] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.adam[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def weight(self, name: str, shape: tuple[int, ...], rng: np.random.Generator) -> Tensor:
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in is the row count."""
        bound = 1.0 / np.sqrt(shape[0])
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def bias(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def gain(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.ones(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Current gradient per parameter; zeros where nothing accumulated."""
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }

    def num_values(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def set_all(self, value: float) -> None:
        for p in self.params.values():
            p.data[...] = value

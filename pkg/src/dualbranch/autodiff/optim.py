"""Named parameter collections and first-order optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from ..errors import ConfigError, ContractError
from .tensor import Tensor


class ParameterSet:
    """Trainable tensors keyed by name, iterated in lexicographic name order."""

    def __init__(self, params: Mapping[str, Tensor] | None = None):
        self._params: Dict[str, Tensor] = {}
        for name, tensor in (params or {}).items():
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        if not tensor.requires_grad:
            raise ContractError(f"parameter {name!r} must require grad")
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for _, p in self.items():
            p.zero_grad()

    def num_values(self) -> int:
        return int(sum(p.size for _, p in self.items()))

    def state(self) -> Dict[str, np.ndarray]:
        """Copies of all parameter values."""
        return {name: p.data.copy() for name, p in self.items()}


@dataclass
class Optimizer:
    """SGD (``w -= lr * g``) or Adam with bias-corrected moments."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    _m: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer.kind: expected 'sgd' or 'adam', got {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"optimizer.learning_rate: must be positive, got {self.learning_rate}")

    def step(self, params: ParameterSet) -> None:
        for name, p in params.items():
            if p.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient")
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = p.grad
            if self.kind == "sgd":
                p.data -= self.learning_rate * g
                continue
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def optimizer_step(opt: Optimizer, params: ParameterSet) -> None:
    opt.step(params)

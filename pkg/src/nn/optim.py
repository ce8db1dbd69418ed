"""
Optimizers Module

SGD and Adam updates over flat parameter lists. The optimizer object owns the moment
state, so one instance belongs to exactly one training context.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.utils.errors import DimensionError, ParameterError


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8

    def validate(self) -> "OptimizerConfig":
        if self.algorithm not in ("sgd", "adam"):
            raise ParameterError(f"Unknown optimizer: {self.algorithm}")
        if not self.lr > 0:
            raise ParameterError(f"learning rate must be > 0, got {self.lr}")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ParameterError(f"betas must be in [0, 1), got {self.betas}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        return self


class Optimizer:
    """Applies one update rule; subclasses keep whatever state the rule needs."""

    def __init__(self, config: OptimizerConfig):
        self.config = config.validate()

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> List[np.ndarray]:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self, params, grads):
        lr = self.config.lr
        return [p - lr * g for p, g in zip(params, grads)]


class Adam(Optimizer):
    def __init__(self, config: OptimizerConfig):
        super().__init__(config)
        self.t = 0
        self.m: List[np.ndarray] = []
        self.v: List[np.ndarray] = []

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        beta1, beta2 = self.config.betas
        self.t += 1
        correction1 = 1.0 - beta1 ** self.t
        correction2 = 1.0 - beta2 ** self.t
        updated = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            updated.append(p - self.config.lr * m_hat / (np.sqrt(v_hat) + self.config.epsilon))
        return updated


def build_optimizer(config: OptimizerConfig) -> Optimizer:
    return Adam(config) if config.algorithm == "adam" else SGD(config)


def optimizer_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], optimizer: Optimizer
) -> List[np.ndarray]:
    """
    Apply one optimizer update.

    Args:
        params: Current parameter arrays
        grads: Gradients, congruent with params
        optimizer: Optimizer holding the rule and its state

    Returns:
        List[np.ndarray]: New parameter arrays
    """
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise DimensionError("parameters and gradients are not congruent")
    return optimizer.step(params, grads)

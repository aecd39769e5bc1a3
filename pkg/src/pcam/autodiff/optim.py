from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigError


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.epsilon <= 0:
            raise ConfigError("weight_decay must be >= 0 and epsilon > 0")


def adamw_step(params, config, lr=None):
    """One AdamW update with decoupled weight decay.

    ``lr`` overrides ``config.learning_rate`` (used by step schedules).
    Parameters without a gradient are treated as having a zero gradient.
    """
    lr = config.learning_rate if lr is None else lr
    b1, b2 = config.beta1, config.beta2
    decay = 1.0 - lr * config.weight_decay
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.step += 1
        p.m = b1 * p.m + (1.0 - b1) * g
        p.v = b2 * p.v + (1.0 - b2) * g * g
        m_hat = p.m / (1.0 - b1 ** p.step)
        v_hat = p.v / (1.0 - b2 ** p.step)
        p.data = p.data * decay
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)


class AdamW:
    """Thin stateful wrapper: holds the parameter list and current learning rate."""

    def __init__(self, params, config=None):
        self.params = list(params)
        self.config = config or OptimizerConfig()
        self.lr = self.config.learning_rate

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adamw_step(self.params, self.config, lr=self.lr)


def step_decay_lr(base_lr, epoch, decay_epochs, factor):
    """Learning rate for ``epoch`` (0-based) after dividing by ``factor`` at each milestone."""
    n = sum(1 for e in decay_epochs if epoch >= e)
    return base_lr / factor ** n

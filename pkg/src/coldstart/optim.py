"""Adam with plateau-based learning-rate halving, shared by both trainers."""

from dataclasses import dataclass

import numpy as np


@dataclass
class TrainConfig:
    """Optimization protocol: epochs, batching, learning-rate schedule."""

    epochs: int = 1000
    batch_size: int = 128
    lr0: float = 5e-3
    lr_halving_patience: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class Adam:
    """Adaptive-moment optimizer over a dict of named parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, g in grads.items():
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * g
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * g * g
            m_hat = self.m[key] / (1.0 - b1**self.t)
            v_hat = self.v[key] / (1.0 - b2**self.t)
            self.params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class PlateauHalver:
    """Halve the learning rate when training loss stalls for `patience` epochs."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def update(self, train_loss, optimizer):
        if train_loss < self.best:
            self.best = train_loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            optimizer.lr *= 0.5
            self.stale = 0
            return True
        return False

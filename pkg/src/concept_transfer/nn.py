"""Small numpy building blocks shared by the encoder and bottleneck nets."""
from __future__ import annotations

import numpy as np

MASK_VALUE = -1e9


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def masked_logits(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, logits, MASK_VALUE)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = masked_logits(logits, mask)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.exp(masked_log_softmax(logits, mask))


def masked_cross_entropy(logits, mask, actions):
    """Mean masked cross-entropy and its gradient w.r.t. ``logits``."""
    n = len(actions)
    logp = masked_log_softmax(logits, mask)
    loss = -logp[np.arange(n), actions].mean()
    grad = np.exp(logp)
    grad[np.arange(n), actions] -= 1.0
    return loss, grad / n


class MomentumSGD:
    """Plain SGD with heavy-ball momentum over a dict of arrays (updated in place)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= self.lr * g
            self.params[k] += v


def frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float32)
    out.flags.writeable = False
    return out

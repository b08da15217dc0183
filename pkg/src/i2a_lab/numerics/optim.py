"""RMSprop and gradient clipping."""

import numpy as np


class RMSProp:
    """``m <- decay*m + (1-decay)*g^2``; ``p <- p - lr*g/sqrt(m+eps)``.

    Steps with a non-finite gradient are rejected and leave all state untouched.
    """

    def __init__(self, size, lr=7e-4, decay=0.99, eps=1e-5):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.m = np.zeros(size)

    def step(self, values, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != values.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {values.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient; step rejected")
        self.m = self.decay * self.m + (1.0 - self.decay) * grad * grad
        values -= self.lr * grad / np.sqrt(self.m + self.eps)
        return values

    def state_dict(self):
        return {"lr": self.lr, "decay": self.decay, "eps": self.eps, "m": self.m.tolist()}


def rmsprop_update(p, g, m, lr, decay, eps):
    """Functional form: returns ``(new_p, new_m)``."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient; step rejected")
    m = decay * m + (1.0 - decay) * g * g
    return p - lr * g / np.sqrt(m + eps), m


def clip_by_global_norm(grad, max_norm):
    if max_norm is None or max_norm <= 0:
        return grad
    norm = float(np.sqrt(np.sum(grad * grad)))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad

"""Adam with bias correction and coupled (L2-style) weight decay."""

from __future__ import annotations

import numpy as np

from .encoders import ParamStore
from .errors import NumericalError


class Adam:
    def __init__(self, params: ParamStore, names: list[str], lr: float,
                 weight_decay: float = 6e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-6):
        self.params = params
        self.names = list(names)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n].data) for n in self.names}
        self.v = {n: np.zeros_like(params[n].data) for n in self.names}

    def step(self):
        """Apply one update from the gradients currently stored on the
        parameters; missing gradients count as zero."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in self.names:
            p = self.params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for {name!r}")
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            self.params.set_(name, p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))

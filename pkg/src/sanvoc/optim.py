"""Bias-corrected Adam on autodiff tensors."""

from __future__ import annotations

import numpy as np


class NanGradientError(RuntimeError):
    """A gradient contained NaN/Inf; names the offending tensor."""


def adam_step(params, grads, moments, lr, beta1=0.8, beta2=0.99, eps=1e-8, t=1):
    """One in-place Adam update.

    params/grads: dicts name -> ndarray; moments: dict name -> (m, v)
    updated in place; t is the 1-based step count used for bias correction.
    """
    if t < 1:
        raise ValueError(f"step count must be >= 1, got {t}")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise NanGradientError(f"non-finite gradient in {name!r}")
        m, v = moments[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    """Stateful wrapper around :func:`adam_step` for a dict of Tensors."""

    def __init__(self, params, lr, beta1=0.8, beta2=0.99, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments = {k: (np.zeros_like(p.data), np.zeros_like(p.data))
                        for k, p in params.items()}

    def step(self):
        self.t += 1
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for k, p in self.params.items()}
        adam_step({k: p.data for k, p in self.params.items()}, grads, self.moments,
                  self.lr, self.beta1, self.beta2, self.eps, self.t)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

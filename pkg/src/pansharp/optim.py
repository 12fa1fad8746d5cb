"""Trainable parameters and the Adam update rule."""
from __future__ import annotations

import numpy as np

from .autograd import Tensor


class Parameter(Tensor):
    """Leaf tensor with gradient and Adam state buffers.

    Gradient and moment buffers are zero-initialized at construction, so a
    parameter that no loss ever reaches simply keeps a zero gradient and an
    Adam step leaves its value unchanged.
    """

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.grad = np.zeros_like(self.data)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0


def adam_step(params, lr, beta1=0.7, beta2=0.99, epsilon=1e-8):
    """One Adam update over `params`, using each parameter's .grad.

    Bias-corrected first/second moments; gradients are zeroed after the step.
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    for name, beta in (("beta1", beta1), ("beta2", beta2)):
        if not 0.0 <= beta < 1.0:
            raise ValueError(f"adam_step: {name} must be in [0, 1), got {beta}")
    if epsilon <= 0:
        raise ValueError(f"adam_step: epsilon must be positive, got {epsilon}")
    for p in params:
        if p.grad is None:
            raise RuntimeError("adam_step: parameter has no gradient buffer")
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + epsilon)).astype(p.data.dtype, copy=False)
        p.grad[...] = 0.0

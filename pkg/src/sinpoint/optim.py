"""Stochastic gradient descent with classical momentum."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class SGD:
    """v <- momentum * v + grad; param <- param - lr * v.

    One velocity buffer per parameter, zero-initialized and shape-matched.
    A parameter whose grad is unset is treated as having a zero gradient.
    """

    def __init__(self, params: list[Tensor], lr: float = 0.1, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            if p.grad is not None:
                v += p.grad.astype(p.data.dtype, copy=False)
            p.data -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

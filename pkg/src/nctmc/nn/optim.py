"""Gradient-descent optimizers operating in place on dicts of arrays."""
from __future__ import annotations

import numpy as np


class SGD:
    algorithm = "sgd"

    def __init__(self, lr=1e-2):
        self.lr = lr
        self.iteration = 0

    def step(self, params: dict, grads: dict) -> dict:
        for k, g in grads.items():
            params[k] -= self.lr * g
        self.iteration += 1
        return params


class Adam:
    """Bias-corrected Adam."""

    algorithm = "adam"

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.iteration = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.iteration += 1
        t = self.iteration
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def make_optimizer(name: str = "adam", **kw):
    if name == "adam":
        return Adam(**kw)
    if name == "sgd":
        return SGD(**kw)
    raise ValueError(f"unknown optimizer {name!r}")

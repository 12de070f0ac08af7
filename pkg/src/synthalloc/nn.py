"""Minimal dense-network substrate with hand-written reverse-mode gradients.

Layers keep parameters in ``self.params`` and accumulate gradients into
``self.grads`` (same keys). ``forward`` returns ``(output, cache)`` and
``backward(cache, dout)`` returns the gradient w.r.t. the input, so one layer
can be applied several times before any backward pass.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.params["W"] = rng.uniform(-bound, bound, size=(n_out, n_in))
        self.params["b"] = rng.uniform(-bound, bound, size=n_out)
        self.zero_grad()

    def forward(self, x):
        return x @ self.params["W"].T + self.params["b"], x

    def backward(self, cache, dout):
        x = cache
        self.grads["W"] += dout.T @ x
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"]


class BatchNorm1d(Layer):
    """Batch statistics while training, running statistics otherwise."""

    def __init__(self, n: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(n)
        self.params["beta"] = np.zeros(n)
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.zero_grad()

    def forward(self, x, train: bool = True, update_stats: bool = True):
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                b = x.shape[0]
                unbiased = var * b / max(b - 1, 1)
                self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
                self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        return self.params["gamma"] * xhat + self.params["beta"], (xhat, inv, train)

    def backward(self, cache, dout):
        xhat, inv, train = cache
        self.grads["gamma"] += (dout * xhat).sum(axis=0)
        self.grads["beta"] += dout.sum(axis=0)
        dxhat = dout * self.params["gamma"]
        if not train:
            return dxhat * inv
        b = dout.shape[0]
        return inv / b * (b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(y, dy, axis=-1):
    return y * (dy - (dy * y).sum(axis=axis, keepdims=True))


def gumbel_softmax(logits, tau: float, gumbel):
    """Relaxed one-hot sample; ``gumbel`` is pre-drawn standard Gumbel noise."""
    return softmax((logits + gumbel) / tau)


def gumbel_softmax_backward(y, dy, tau: float):
    return softmax_backward(y, dy) / tau


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, layers, lr: float = 1e-4, betas=(0.5, 0.9), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.layers = list(layers)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in self.layers]
        self.v = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in self.layers]

    def zero_grad(self):
        for l in self.layers:
            l.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for layer, m, v in zip(self.layers, self.m, self.v):
            for k, p in layer.params.items():
                g = layer.grads[k]
                if self.weight_decay:
                    g = g + self.weight_decay * p
                m[k] *= self.b1
                m[k] += (1 - self.b1) * g
                v[k] *= self.b2
                v[k] += (1 - self.b2) * g * g
                p -= self.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

"""Dense-network substrate: affine layers, tanh, softmax helpers, and Adam.

Gradients are hand-derived per layer (forward caches its inputs, backward
accumulates into ``Param.grad`` and returns the input gradient). Only the
shapes this simulator needs are supported: vectors or row batches through
one-hidden-layer MLPs.
"""
from __future__ import annotations

import numpy as np

AGENT_LR = 1e-4
OBSERVER_LR = 1e-3
HIDDEN = 64


class DivergenceError(FloatingPointError):
    """A gradient or loss went non-finite; the run cannot continue."""


class Param:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str = ""):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


class Linear:
    """y = x @ W + b with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "fc"):
        bound = 1.0 / np.sqrt(n_in)
        self.W = Param(rng.uniform(-bound, bound, size=(n_in, n_out)), f"{name}.W")
        self.b = Param(rng.uniform(-bound, bound, size=n_out), f"{name}.b")
        self._x = None

    @property
    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        if x.ndim == 1:
            self.W.grad += np.outer(x, dy)
            self.b.grad += dy
        else:
            self.W.grad += x.T @ dy
            self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class Tanh:
    params: list[Param] = []

    def __init__(self):
        self._y = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._y * self._y)


class MLP:
    """Linear -> tanh -> Linear."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 hidden: int = HIDDEN, name: str = "mlp"):
        self.layers = [Linear(n_in, hidden, rng, f"{name}.0"), Tanh(),
                       Linear(hidden, n_out, rng, f"{name}.1")]

    @property
    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def entropy(logits: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of softmax(logits) along the last axis."""
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def entropy_grad(logits: np.ndarray) -> np.ndarray:
    """dH/dlogits = -p * (log p + H)."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    h = -(p * logp).sum(axis=-1, keepdims=True)
    return -p * (logp + h)


def cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss -log softmax(logits)[target] and its gradient p - onehot."""
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[target] -= 1.0
    return float(-logp[target]), grad


class Adam:
    """Adam with bias correction and an externally resettable state.

    ``t`` is incremented before the correction terms are formed, so the first
    update after :meth:`reset_state` uses t = 1 and the corrected moments
    equal g and g**2 exactly.
    """

    def __init__(self, params: list[Param], lr: float = AGENT_LR,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient in {p.name or p}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def reset_state(self) -> None:
        """Zero both moments and the step counter; hyperparameters are kept."""
        for m, v in zip(self.m, self.v):
            m.fill(0.0)
            v.fill(0.0)
        self.t = 0

    def corrected_moments(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        if self.t == 0:
            return ([np.zeros_like(m) for m in self.m], [np.zeros_like(v) for v in self.v])
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        return [m / bc1 for m in self.m], [v / bc2 for v in self.v]

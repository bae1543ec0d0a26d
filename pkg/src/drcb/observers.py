"""Randomized pool of online observers predicting the receiver's action.

Each member is a small MLP over the quantized message. Every round a fresh
subset is graded on the current (message, action) pair with pre-update
predictions, then each selected member takes one cross-entropy step on that
pair. Unselected members are untouched. Every ``refresh_period`` rounds one
member is replaced by a freshly initialized model before the subset is drawn.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import HIDDEN, MLP, OBSERVER_LR, Adam, cross_entropy, softmax

N_POOL = 8
N_SUB = 3
T_REFRESH = 100


class Observer:
    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int = HIDDEN,
                 lr: float = OBSERVER_LR):
        self.net = MLP(in_dim, 2, rng, hidden, name="obs")
        self.opt = Adam(self.net.params, lr=lr)

    @property
    def params(self):
        return self.net.params

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def predict(self, x: np.ndarray) -> int:
        return int(np.argmax(self.logits(x)))

    def prob(self, x: np.ndarray, action: int) -> float:
        return float(softmax(self.logits(x))[action])

    def loss(self, x: np.ndarray, action: int) -> float:
        return cross_entropy(self.logits(x), int(action))[0]

    def train_step(self, x: np.ndarray, action: int) -> tuple[float, float]:
        """One Adam step on a single pair; returns (loss, gradient norm)."""
        self.opt.zero_grad()
        loss, d_logits = cross_entropy(self.logits(x), int(action))
        self.net.backward(d_logits)
        gnorm = float(np.sqrt(sum(float((p.grad ** 2).sum()) for p in self.params)))
        self.opt.step()
        return loss, gnorm

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params]


@dataclass
class PoolStep:
    acc: float
    selected: tuple[int, ...]
    correct: tuple[int, ...]
    refreshed: int | None
    loss: float
    grad_norm: float

    @property
    def bitmap(self) -> int:
        """Selected members as bits (member i -> bit i)."""
        return sum(1 << i for i in self.selected)


class ObserverPool:
    def __init__(self, rng: np.random.Generator, in_dim: int, n_pool: int = N_POOL,
                 n_sub: int = N_SUB, refresh_period: int | None = T_REFRESH,
                 hidden: int = HIDDEN, lr: float = OBSERVER_LR):
        if not 1 <= n_sub <= n_pool:
            raise ValueError(f"need 1 <= n_sub <= n_pool, got {n_sub}, {n_pool}")
        self.rng = rng
        self.in_dim = in_dim
        self.hidden = hidden
        self.lr = lr
        self.n_sub = n_sub
        self.refresh_period = refresh_period
        self.members = [self._fresh() for _ in range(n_pool)]

    @classmethod
    def singleton(cls, rng: np.random.Generator, in_dim: int, **kw) -> "ObserverPool":
        """Static-monitor configuration: one observer, always trained, never replaced."""
        return cls(rng, in_dim, n_pool=1, n_sub=1, refresh_period=None, **kw)

    @property
    def n_pool(self) -> int:
        return len(self.members)

    def _fresh(self) -> Observer:
        return Observer(self.rng, self.in_dim, self.hidden, self.lr)

    def step(self, x: np.ndarray, action_b: int, round_: int) -> PoolStep:
        if round_ < 0:
            raise ValueError("round must be non-negative")
        refreshed = None
        if self.refresh_period and round_ > 0 and round_ % self.refresh_period == 0:
            refreshed = int(self.rng.integers(self.n_pool))
            self.members[refreshed] = self._fresh()
        selected = tuple(sorted(int(i) for i in
                                self.rng.choice(self.n_pool, size=self.n_sub, replace=False)))
        correct = tuple(int(self.members[i].predict(x) == int(action_b)) for i in selected)
        losses, norms = [], []
        for i in selected:
            loss, gnorm = self.members[i].train_step(x, action_b)
            losses.append(loss)
            norms.append(gnorm)
        return PoolStep(acc=pool_accuracy(correct), selected=selected, correct=correct,
                        refreshed=refreshed, loss=float(np.mean(losses)),
                        grad_norm=float(np.mean(norms)))


def pool_accuracy(correct) -> float:
    """Equal-weight mean correctness over the sampled subset."""
    return float(sum(correct)) / len(correct)

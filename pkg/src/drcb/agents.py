"""Two A2C agents joined by the symbol bottleneck.

The sender encodes its context into L latent vectors. Each position's symbol
policy is a softmax over negative squared distances to the codebook, so its
mode is the quantizer's nearest entry. The sender also picks its own action.
The receiver sees the quantized vectors plus its context parity.

Loss per agent:

    -log_prob * advantage + 0.5 * (value - value_target)**2 - c_ent * entropy

The sender adds the commitment loss and a reconstruction loss through the
straight-through estimator. Governance penalties only ever enter
``advantage``; the value target is the raw environment joint reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aim
from .env import Action, ContextLabel
from .numeric import (AGENT_LR, HIDDEN, Adam, DivergenceError, Linear, Tanh,
                      entropy, entropy_grad, log_softmax, softmax)

N_ACTIONS = 2
CONTEXT_DIM = 12  # parity one-hot + digit one-hot
ENTROPY_COEFF = 0.01
EXPLORATION_ENTROPY_COEFF = 0.05
PENALTY_LAMBDA = 2.5
# distance scale of the symbol policy; small enough that sampling tracks nearest-neighbour quantization
SYMBOL_TEMPERATURE = 0.01


def context_features(ctx: ContextLabel) -> np.ndarray:
    x = np.zeros(CONTEXT_DIM)
    x[int(ctx.parity)] = 1.0
    x[2 + ctx.digit] = 1.0
    return x


def parity_features(ctx: ContextLabel) -> np.ndarray:
    x = np.zeros(2)
    x[int(ctx.parity)] = 1.0
    return x


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(softmax(logits))
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))


def inject_penalty(advantage: float, s_ema: float, tp: float, lam: float = PENALTY_LAMBDA) -> float:
    """Add the gradient-space penalty -lam * s_ema / tp to an advantage."""
    if tp <= 0:
        raise ValueError("tp must be positive")
    return advantage + (-lam * s_ema / tp)


@dataclass(frozen=True)
class SymbolMessage:
    indices: tuple[int, ...]
    quantized: np.ndarray  # L x D, rows are codebook entries at emission time

    @property
    def flat(self) -> np.ndarray:
        return self.quantized.reshape(-1)


@dataclass
class PolicyOutput:
    x: np.ndarray
    action: int
    action_logits: np.ndarray
    value: float
    log_prob: float
    entropy: float
    symbols: tuple[int, ...] | None = None
    symbol_logits: np.ndarray | None = None  # L x K


@dataclass(frozen=True)
class TrainSignal:
    advantage: float
    value_target: float
    entropy_coeff: float = ENTROPY_COEFF


@dataclass
class LossComponents:
    policy: float
    value: float
    entropy: float
    vq: float = 0.0
    recon: float = 0.0

    def total(self, entropy_coeff: float) -> float:
        return self.policy + self.value - entropy_coeff * self.entropy + self.vq + self.recon


def _head_grads(action: int, logits: np.ndarray, value: float, sig: TrainSignal):
    """Gradients of the A2C loss w.r.t. action logits and value."""
    p = softmax(logits)
    p[action] -= 1.0
    d_logits = sig.advantage * p - sig.entropy_coeff * entropy_grad(logits)
    d_value = np.array([value - sig.value_target])
    return d_logits, d_value


class Sender:
    def __init__(self, rng: np.random.Generator, K: int = 32, D: int = 64, L: int = 2,
                 hidden: int = HIDDEN, lr: float = AGENT_LR, temperature: float = SYMBOL_TEMPERATURE,
                 beta: float = aim.COMMITMENT_BETA, recon_coeff: float = 1.0):
        self.K, self.D, self.L = K, D, L
        self.temperature = temperature
        self.beta = beta
        self.recon_coeff = recon_coeff
        self.codebook = aim.Codebook.uniform(K, D, rng)
        self.fc = Linear(CONTEXT_DIM, hidden, rng, "a.fc")
        self.tanh = Tanh()
        self.enc = Linear(hidden, L * D, rng, "a.enc")
        self.pi = Linear(hidden, N_ACTIONS, rng, "a.pi")
        self.v = Linear(hidden, 1, rng, "a.v")
        self.dec = Linear(L * D, CONTEXT_DIM, rng, "a.dec")
        self.opt = Adam(self.params, lr=lr)

    @property
    def params(self):
        layers = (self.fc, self.enc, self.pi, self.v, self.dec)
        return [p for layer in layers for p in layer.params] + [self.codebook.param]

    def _forward(self, x: np.ndarray):
        h = self.tanh.forward(self.fc.forward(x))
        z_e = self.enc.forward(h).reshape(self.L, self.D)
        sym_logits = -aim.squared_distances(z_e, self.codebook.entries) / self.temperature
        return h, z_e, sym_logits, self.pi.forward(h), float(self.v.forward(h)[0])

    def encode(self, ctx: ContextLabel) -> np.ndarray:
        return self._forward(context_features(ctx))[1]

    def act(self, ctx: ContextLabel, rng: np.random.Generator):
        x = context_features(ctx)
        _, _, sym_logits, act_logits, value = self._forward(x)
        symbols = tuple(sample_categorical(row, rng) for row in sym_logits)
        action = sample_categorical(act_logits, rng)
        for k in symbols:
            self.codebook.record(k)
        sym_logp = log_softmax(sym_logits)
        log_prob = float(sum(sym_logp[l, k] for l, k in enumerate(symbols))
                         + log_softmax(act_logits)[action])
        ent = float(entropy(sym_logits).sum() + entropy(act_logits))
        msg = SymbolMessage(symbols, self.codebook.entries[list(symbols)].copy())
        out = PolicyOutput(x, action, act_logits, value, log_prob, ent, symbols, sym_logits)
        return msg, Action(action), out

    def accumulate_grads(self, out: PolicyOutput, sig: TrainSignal) -> LossComponents:
        """Recompute the forward pass for ``out`` and accumulate loss gradients."""
        h, z_e, sym_logits, act_logits, value = self._forward(out.x)
        E = self.codebook.entries
        idx = list(out.symbols)
        z_q = E[idx]

        sym_logp = log_softmax(sym_logits)
        act_logp = log_softmax(act_logits)
        log_prob = sym_logp[np.arange(self.L), idx].sum() + act_logp[out.action]
        ent = entropy(sym_logits).sum() + entropy(act_logits)

        d_act, d_value = _head_grads(out.action, act_logits, value, sig)

        # symbol logits s_lk = -||z_l - e_k||^2 / T
        onehot = np.zeros_like(sym_logits)
        onehot[np.arange(self.L), idx] = 1.0
        d_s = sig.advantage * (np.exp(sym_logp) - onehot) - sig.entropy_coeff * entropy_grad(sym_logits)
        diff = z_e[:, None, :] - E[None, :, :]  # L x K x D
        d_z = -2.0 / self.temperature * np.einsum("lk,lkd->ld", d_s, diff)
        d_E = 2.0 / self.temperature * np.einsum("lk,lkd->kd", d_s, diff)

        vq_total = 0.0
        for l, k in enumerate(idx):
            loss, g_z, g_e = aim.vq_loss(z_e[l], z_q[l], self.beta)
            vq_total += loss
            d_z[l] += g_z
            d_E[k] += g_e

        recon_out = self.dec.forward(z_q.reshape(-1))
        resid = recon_out - out.x
        recon = 0.5 * float(resid @ resid) * self.recon_coeff
        d_zq = self.dec.backward(self.recon_coeff * resid).reshape(self.L, self.D)
        d_z += aim.straight_through(d_zq)

        self.codebook.param.grad += d_E
        d_h = (self.enc.backward(d_z.reshape(-1)) + self.pi.backward(d_act)
               + self.v.backward(d_value))
        self.fc.backward(self.tanh.backward(d_h))

        comps = LossComponents(policy=float(-log_prob * sig.advantage),
                               value=0.5 * (value - sig.value_target) ** 2,
                               entropy=float(ent), vq=float(vq_total), recon=recon)
        if not np.isfinite(comps.total(sig.entropy_coeff)):
            raise DivergenceError("non-finite sender loss")
        return comps

    def update(self, out: PolicyOutput, sig: TrainSignal) -> LossComponents:
        self.opt.zero_grad()
        comps = self.accumulate_grads(out, sig)
        self.opt.step()
        return comps


class Receiver:
    def __init__(self, rng: np.random.Generator, msg_dim: int = 2 * 64,
                 hidden: int = HIDDEN, lr: float = AGENT_LR):
        self.fc = Linear(msg_dim + 2, hidden, rng, "b.fc")
        self.tanh = Tanh()
        self.pi = Linear(hidden, N_ACTIONS, rng, "b.pi")
        self.v = Linear(hidden, 1, rng, "b.v")
        self.opt = Adam(self.params, lr=lr)

    @property
    def params(self):
        return [p for layer in (self.fc, self.pi, self.v) for p in layer.params]

    def _forward(self, x: np.ndarray):
        h = self.tanh.forward(self.fc.forward(x))
        return self.pi.forward(h), float(self.v.forward(h)[0])

    def act(self, msg: SymbolMessage, ctx: ContextLabel, rng: np.random.Generator):
        x = np.concatenate([msg.flat, parity_features(ctx)])
        act_logits, value = self._forward(x)
        action = sample_categorical(act_logits, rng)
        out = PolicyOutput(x, action, act_logits, value,
                           float(log_softmax(act_logits)[action]), float(entropy(act_logits)))
        return Action(action), out

    def accumulate_grads(self, out: PolicyOutput, sig: TrainSignal) -> LossComponents:
        act_logits, value = self._forward(out.x)
        d_act, d_value = _head_grads(out.action, act_logits, value, sig)
        d_h = self.pi.backward(d_act) + self.v.backward(d_value)
        self.fc.backward(self.tanh.backward(d_h))
        logp = log_softmax(act_logits)[out.action]
        comps = LossComponents(policy=float(-logp * sig.advantage),
                               value=0.5 * (value - sig.value_target) ** 2,
                               entropy=float(entropy(act_logits)))
        if not np.isfinite(comps.total(sig.entropy_coeff)):
            raise DivergenceError("non-finite receiver loss")
        return comps

    def update(self, out: PolicyOutput, sig: TrainSignal) -> LossComponents:
        self.opt.zero_grad()
        comps = self.accumulate_grads(out, sig)
        self.opt.step()
        return comps

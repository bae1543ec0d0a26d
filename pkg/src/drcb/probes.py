"""Statistical probes over the symbol stream and the codebook.

* Laplace-smoothed symbol histograms and Jensen-Shannon divergence between
  consecutive windows (rotation of symbol usage).
* Mean L2 displacement of codebook entries over a lag (smooth drift).
* The EMA collusion score: clipped joint reward over observer accuracy.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

WINDOW = 50
EPS_SMOOTH = 1.0
EPS_TRAIN = 0.1
EPS_ANALYSIS = 1e-5
ALPHA = 0.1
WARMUP = 50
PLATEAU_TOL = 1e-3
GRAD_FAIL_TOL = 1e-6


def smooth(counts, eps_s: float = EPS_SMOOTH) -> np.ndarray:
    """Additive smoothing: p_k = (c_k + eps) / sum_j (c_j + eps)."""
    if eps_s <= 0:
        raise ValueError("eps_s must be positive")
    c = np.asarray(counts, dtype=np.float64) + eps_s
    return c / c.sum()


def kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats, bounded by ln 2."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def l2_drift(book_now: np.ndarray, book_then: np.ndarray) -> float:
    """(1/K) * sum_k ||e_k(now) - e_k(then)||."""
    if book_now.shape != book_then.shape:
        raise ValueError(f"shape mismatch {book_now.shape} vs {book_then.shape}")
    return float(np.linalg.norm(book_now - book_then, axis=1).mean())


class DriftMonitor:
    """Keeps the last 2W messages and W codebook snapshots.

    JSD compares the most recent W rounds of symbols (both positions pooled)
    against the W rounds before them. Until 2W rounds exist the available
    history is split in half instead.
    """

    def __init__(self, K: int, window: int = WINDOW, eps_s: float = EPS_SMOOTH):
        self.K = K
        self.window = window
        self.eps_s = eps_s
        self.history: deque[tuple[int, ...]] = deque(maxlen=2 * window)
        self.snapshots: deque[np.ndarray] = deque(maxlen=window + 1)

    def counts(self, rounds) -> np.ndarray:
        flat = [k for msg in rounds for k in msg]
        return np.bincount(flat, minlength=self.K) if flat else np.zeros(self.K, dtype=np.int64)

    def push(self, indices, codebook: np.ndarray) -> tuple[float, float]:
        """Record one round; returns (jsd, l2_drift) for it."""
        self.history.append(tuple(indices))
        self.snapshots.append(codebook.copy())
        hist = list(self.history)
        h = min(self.window, len(hist) // 2)
        if h == 0:
            d_js = 0.0
        else:
            recent = self.counts(hist[-h:])
            prior = self.counts(hist[-2 * h:-h])
            d_js = jsd(smooth(recent, self.eps_s), smooth(prior, self.eps_s))
        d_l2 = l2_drift(self.snapshots[-1], self.snapshots[0])
        return d_js, d_l2


def instantaneous_score(r_joint: float, acc_obs: float, eps: float = EPS_TRAIN) -> float:
    return max(0.0, r_joint) / (acc_obs + eps)


@dataclass
class CollusionScore:
    s_ema: float = 0.0
    alpha: float = ALPHA
    eps: float = EPS_TRAIN

    def update(self, r_joint: float, acc_obs: float) -> float:
        if not 0.0 <= acc_obs <= 1.0:
            raise ValueError(f"acc_obs outside [0, 1]: {acc_obs}")
        inst = instantaneous_score(r_joint, acc_obs, self.eps)
        self.s_ema = self.alpha * inst + (1.0 - self.alpha) * self.s_ema
        return inst

    def reset(self) -> None:
        self.s_ema = 0.0


def rescore(rewards, accs, alpha: float = ALPHA, eps: float = EPS_ANALYSIS,
            resets=()) -> np.ndarray:
    """Replay the EMA score over a logged trace, zeroing it at ``resets`` rounds."""
    reset_at = set(resets)
    sc = CollusionScore(alpha=alpha, eps=eps)
    out = np.empty(len(rewards))
    for t, (r, a) in enumerate(zip(rewards, accs)):
        sc.update(r, a)
        if t in reset_at:
            sc.reset()
        out[t] = sc.s_ema
    return out


def windowed_slope(values) -> float:
    """Least-squares slope of ``values`` against their index."""
    y = np.asarray(values, dtype=np.float64)
    if y.size < 2:
        return 0.0
    x = np.arange(y.size) - (y.size - 1) / 2.0
    return float(x @ (y - y.mean()) / (x @ x))


@dataclass(frozen=True)
class Diagnostics:
    reward_plateau: bool
    observer_grad_failure: bool
    slope: float
    mean_grad_norm: float


def diagnostics(recent_rewards, recent_obs_grad_norms, plateau_tol: float = PLATEAU_TOL,
                grad_tol: float = GRAD_FAIL_TOL) -> Diagnostics:
    """Log-only collusion signatures: vanishing reward trend, vanishing observer gradient."""
    slope = windowed_slope(recent_rewards)
    gnorm = float(np.mean(recent_obs_grad_norms)) if len(recent_obs_grad_norms) else float("nan")
    return Diagnostics(abs(slope) < plateau_tol, bool(gnorm < grad_tol), slope, gnorm)


def evasion_flag(d_js: float, d_l2: float, tau_jsd: float, tau_l2: float) -> bool:
    """Stable symbol histogram with a moving codebook. Logged only."""
    return d_js < tau_jsd and d_l2 > tau_l2

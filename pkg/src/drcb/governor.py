"""Circuit-breaker governor: a finite-state machine over the collusion score.

Phases:

    S0 warm-up        rounds < warmup; only the continuous advantage penalty
    S1 monitoring     evaluates the suppression (tp) and break (ts_dyn) triggers
    S2 suppression    reward replaced by the survival reward for K rounds
    S3 cooldown       suppression trigger locked
    S4 circuit break  codebook shuffle, optimizer reset, score reset
    S5 exploration    elevated entropy coefficient; no triggers

Resolution order each round after warm-up: exploration, then suppression,
then cooldown, then monitoring. A suppression trigger and a circuit break may
fire in the same round. The break then wins: the pending suppression window
is dropped and its cooldown is served after the exploration window, so the
two counters are never both positive.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Phase(str, Enum):
    S0_WARMUP = "S0_Warmup"
    S1_MONITORING = "S1_Monitoring"
    S2_SUPPRESSION = "S2_Suppression"
    S3_COOLDOWN = "S3_Cooldown"
    S4_CIRCUIT_BREAK = "S4_CircuitBreak"
    S5_EXPLORATION = "S5_Exploration"


@dataclass(frozen=True)
class GovernorConfig:
    tp: float = 12.0
    ts_base: float = 18.0
    lam: float = 2.5
    k_suppress: int = 15
    cooldown: int = 20
    exploration: int = 30
    survival_reward: float = 0.1
    warmup: int = 50
    calibration_window: int = 50
    collapse_ratio: float = 0.80
    jsd_ratio: float = 0.50
    penalty_exponent: float = 1.0
    layer2: bool = True
    suppression: bool = True
    circuit_break: bool = True
    dynamic_ts: bool = True
    auto_calibrate: bool = True

    @property
    def lockout(self) -> int:
        return self.k_suppress + self.cooldown


@dataclass(frozen=True)
class GovernorState:
    phase: Phase = Phase.S0_WARMUP
    suppression_left: int = 0
    cooldown_left: int = 0
    exploration_left: int = 0
    tp: float = 12.0
    ts_base: float = 18.0
    tau_collapse: float | None = None
    tau_jsd: float | None = None
    calibrated: bool = False

    @classmethod
    def initial(cls, cfg: GovernorConfig) -> "GovernorState":
        return cls(tp=cfg.tp, ts_base=cfg.ts_base)


@dataclass(frozen=True)
class Intervention:
    layer2_active: bool = False
    reward_override: float | None = None
    shuffle_now: bool = False
    reset_optimizers: bool = False
    reset_score: bool = False
    entropy_boost: bool = False
    penalty_multiplier: float = 0.0
    suppression_started: bool = False
    ts_dynamic: float = float("nan")

    @property
    def any_fired(self) -> bool:
        return (self.layer2_active or self.reward_override is not None or self.shuffle_now
                or self.suppression_started or self.entropy_boost)


def auto_calibrate(rewards, jsds, window: int = 50, collapse_ratio: float = 0.80,
                   jsd_ratio: float = 0.50) -> tuple[float, float] | None:
    """Thresholds from the natural-state window, or None while it is still filling.

    tau_collapse = collapse_ratio * population variance of the rewards,
    tau_jsd = jsd_ratio * mean JSD.
    """
    if len(rewards) < window or len(jsds) < window:
        return None
    r = np.asarray(rewards[:window], dtype=np.float64)
    j = np.asarray(jsds[:window], dtype=np.float64)
    return collapse_ratio * float(r.var()), jsd_ratio * float(j.mean())


def dynamic_ts(ts_base: float, acc_obs: float) -> float:
    """Break threshold shrinks as observers become more accurate: ts * (1 - 0.5 acc)."""
    if not 0.0 <= acc_obs <= 1.0:
        raise ValueError(f"acc_obs outside [0, 1]: {acc_obs}")
    return ts_base * (1.0 - 0.5 * acc_obs)


def graduated_penalty(r_base: float, s_ema: float, tp: float, lam: float = 2.5,
                      exponent: float = 1.0) -> float:
    """r_base * (1 + lam * overshoot**exponent), overshoot = (s_ema - tp) / tp."""
    if tp <= 0:
        raise ValueError("tp must be positive")
    overshoot = max(0.0, (s_ema - tp) / tp)
    return r_base * (1.0 + lam * overshoot ** exponent)


def tick(gs: GovernorState, cfg: GovernorConfig, s_ema: float, acc_obs: float,
         round_: int) -> tuple[GovernorState, Intervention]:
    """Advance the state machine by one round."""
    breach = s_ema > gs.tp
    l2 = cfg.layer2 and breach
    mult = graduated_penalty(1.0, s_ema, gs.tp, cfg.lam, cfg.penalty_exponent) if l2 else 0.0
    ts_dyn = dynamic_ts(gs.ts_base, acc_obs) if cfg.dynamic_ts else gs.ts_base

    if round_ < cfg.warmup:
        return (replace(gs, phase=Phase.S0_WARMUP),
                Intervention(layer2_active=l2, penalty_multiplier=mult, ts_dynamic=ts_dyn))

    if gs.exploration_left > 0:
        return (replace(gs, phase=Phase.S5_EXPLORATION, exploration_left=gs.exploration_left - 1),
                Intervention(entropy_boost=True, ts_dynamic=ts_dyn))

    if gs.suppression_left > 0:
        left = gs.suppression_left - 1
        cooldown = cfg.cooldown if left == 0 else gs.cooldown_left
        return (replace(gs, phase=Phase.S2_SUPPRESSION, suppression_left=left, cooldown_left=cooldown),
                Intervention(layer2_active=l2, penalty_multiplier=mult,
                             reward_override=cfg.survival_reward, ts_dynamic=ts_dyn))

    if gs.cooldown_left > 0:
        return (replace(gs, phase=Phase.S3_COOLDOWN, cooldown_left=gs.cooldown_left - 1),
                Intervention(layer2_active=l2, penalty_multiplier=mult, ts_dynamic=ts_dyn))

    suppress = cfg.suppression and breach
    brk = cfg.circuit_break and s_ema > ts_dyn
    new = replace(gs, phase=Phase.S1_MONITORING)
    if suppress:
        new = replace(new, phase=Phase.S2_SUPPRESSION, suppression_left=cfg.k_suppress)
    if brk:
        new = replace(new, phase=Phase.S4_CIRCUIT_BREAK, exploration_left=cfg.exploration)
        if suppress:
            new = replace(new, suppression_left=0, cooldown_left=cfg.cooldown)
    return new, Intervention(layer2_active=l2, penalty_multiplier=mult, shuffle_now=brk,
                             reset_optimizers=brk, reset_score=brk, suppression_started=suppress,
                             ts_dynamic=ts_dyn)


class Governor:
    """Stateful wrapper: owns the state, runs calibration, delegates to :func:`tick`."""

    def __init__(self, cfg: GovernorConfig | None = None):
        self.cfg = cfg or GovernorConfig()
        self.state = GovernorState.initial(self.cfg)
        self._cal_rewards: list[float] = []
        self._cal_jsds: list[float] = []

    def observe(self, r_joint: float, d_jsd: float) -> None:
        """Feed the natural-state window; calibrates once it is full."""
        if not self.cfg.auto_calibrate or self.state.calibrated:
            return
        self._cal_rewards.append(r_joint)
        self._cal_jsds.append(d_jsd)
        result = auto_calibrate(self._cal_rewards, self._cal_jsds, self.cfg.calibration_window,
                                self.cfg.collapse_ratio, self.cfg.jsd_ratio)
        if result is not None:
            self.state = replace(self.state, tau_collapse=result[0], tau_jsd=result[1],
                                 calibrated=True)

    def tick(self, s_ema: float, acc_obs: float, round_: int) -> Intervention:
        self.state, iv = tick(self.state, self.cfg, s_ema, acc_obs, round_)
        return iv

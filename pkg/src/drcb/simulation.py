"""One seeded run: environment, agents, observers, probes and governor in a loop.

Per-round ordering (also recorded in every log header):

    context -> sender acts -> receiver acts -> payoff
    -> observer refresh / subset sample / accuracy / observer updates
    -> probes (JSD, L2 drift, score) -> governor tick
    -> reward override and advantage penalty -> agent updates
    -> shuffle and optimizer reset (take effect next round) -> log
"""
from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aim
from .agents import Receiver, Sender, TrainSignal, inject_penalty
from .config import ExperimentConfig
from .env import ContextSource, load_idx1, payoff
from .governor import Governor, Phase
from .observers import ObserverPool
from .probes import CollusionScore, DriftMonitor, diagnostics, evasion_flag

SCHEMA_VERSION = 1
ROUND_ORDER = ("observer_refresh", "subset_sample", "accuracy", "probes", "governor",
               "interventions", "learning_updates")


@dataclass
class RunLog:
    seed: int
    group: str
    config: dict
    records: list[dict] = field(default_factory=list)

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def header(self) -> dict:
        return {"type": "header", "schema_version": SCHEMA_VERSION, "seed": self.seed,
                "group": self.group, "round_order": list(ROUND_ORDER), "config": self.config}

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps({"type": "round", **r}, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("type") != "header":
                raise ValueError(f"{path}: first record is not a header")
            if header.get("schema_version") != SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported schema {header.get('schema_version')}")
            log = cls(header["seed"], header["group"], header["config"])
            for line in fh:
                rec = json.loads(line)
                rec.pop("type", None)
                log.records.append(rec)
        for i, rec in enumerate(log.records):
            if rec["round"] != i:
                raise ValueError(f"{path}: rounds not contiguous at record {i}")
        return log


def _r(x: float) -> float:
    return float(x)


class Simulation:
    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        rng_env, rng_agents, rng_pool, rng_policy, rng_book = (np.random.default_rng(s)
                                                               for s in ss.spawn(5))
        self.rng_env, self.rng_policy, self.rng_book = rng_env, rng_policy, rng_book

        labels = load_idx1(cfg.labels_path) if cfg.labels_path else None
        self.contexts = ContextSource(labels)
        self.sender = Sender(rng_agents, K=cfg.K, D=cfg.D, L=cfg.L, hidden=cfg.hidden,
                             lr=cfg.agent_lr, temperature=cfg.temperature, beta=cfg.beta,
                             recon_coeff=cfg.recon_coeff)
        self.receiver = Receiver(rng_agents, msg_dim=cfg.L * cfg.D, hidden=cfg.hidden,
                                 lr=cfg.agent_lr)
        msg_dim = cfg.L * cfg.D
        if cfg.group == "static":
            self.pool = ObserverPool.singleton(rng_pool, msg_dim, hidden=cfg.hidden,
                                               lr=cfg.observer_lr)
        else:
            self.pool = ObserverPool(rng_pool, msg_dim, n_pool=cfg.n_pool, n_sub=cfg.n_sub,
                                     refresh_period=cfg.t_refresh, hidden=cfg.hidden,
                                     lr=cfg.observer_lr)
        self.monitor = DriftMonitor(cfg.K, cfg.window, cfg.eps_smooth)
        self.score = CollusionScore(alpha=cfg.alpha, eps=cfg.eps_train)
        self.governor = Governor(cfg.governor())
        self.recent_rewards: deque[float] = deque(maxlen=cfg.window)
        self.recent_grad_norms: deque[float] = deque(maxlen=cfg.window)
        self.cal_l2: list[float] = []
        self.tau_l2 = cfg.tau_l2
        self.log = RunLog(seed, cfg.group, cfg.to_dict())

    @property
    def book(self) -> aim.Codebook:
        return self.sender.codebook

    def step(self, t: int) -> dict:
        cfg = self.cfg
        ctx = self.contexts.next_context(self.rng_env)
        msg, act_a, out_a = self.sender.act(ctx, self.rng_policy)
        act_b, out_b = self.receiver.act(msg, ctx, self.rng_policy)
        rewards = payoff(act_a, act_b, ctx)
        r_raw = rewards.joint

        obs = self.pool.step(msg.flat, int(act_b), t)

        d_js, d_l2 = self.monitor.push(msg.indices, self.book.entries)
        inst = self.score.update(r_raw, obs.acc)
        s_ema = self.score.s_ema
        self.governor.observe(r_raw, d_js)
        if t < cfg.warmup:
            self.cal_l2.append(d_l2)
        elif self.tau_l2 is None and self.cal_l2:
            self.tau_l2 = float(np.percentile(self.cal_l2, 95))
        iv = self.governor.tick(s_ema, obs.acc, t)
        gs = self.governor.state

        r_delivered = iv.reward_override if iv.reward_override is not None else r_raw
        penalty = max(0.0, r_raw) * iv.penalty_multiplier
        c_ent = cfg.exploration_entropy_coeff if iv.entropy_boost else cfg.entropy_coeff

        adv_a = r_delivered - out_a.value
        adv_b = r_delivered - out_b.value
        if iv.layer2_active:
            adv_a = inject_penalty(adv_a, s_ema, gs.tp, cfg.lam)
            adv_b = inject_penalty(adv_b, s_ema, gs.tp, cfg.lam)
        loss_a = self.sender.update(out_a, TrainSignal(adv_a, r_raw, c_ent))
        loss_b = self.receiver.update(out_b, TrainSignal(adv_b, r_raw, c_ent))

        if iv.shuffle_now:
            aim.shuffle(self.book, self.rng_book)
        if iv.reset_optimizers:
            self.sender.opt.reset_state()
            self.receiver.opt.reset_state()
        if iv.reset_score:
            self.score.reset()

        util = reinit = None
        if (t + 1) % cfg.window == 0:
            util = aim.utilization(self.book)
            reinit = aim.reinit_unused(self.book, self.rng_book) if util < cfg.u_min else 0
            self.book.reset_usage()

        self.recent_rewards.append(r_delivered)
        self.recent_grad_norms.append(obs.grad_norm)
        diag = diagnostics(self.recent_rewards, self.recent_grad_norms)
        evasion = None
        if gs.tau_jsd is not None and self.tau_l2 is not None:
            evasion = evasion_flag(d_js, d_l2, gs.tau_jsd, self.tau_l2)

        rec = {
            "round": t,
            "digit": ctx.digit,
            "parity": int(ctx.parity),
            "symbols": list(msg.indices),
            "action_a": int(act_a),
            "action_b": int(act_b),
            "reward_a": _r(rewards.reward_a),
            "reward_b": _r(rewards.reward_b),
            "reward_raw": _r(r_raw),
            "reward_delivered": _r(r_delivered),
            "reward_penalized": _r(r_delivered - penalty),
            "value_target": _r(r_raw),
            "advantage_a": _r(adv_a),
            "advantage_b": _r(adv_b),
            "acc_obs": _r(obs.acc),
            "obs_selected": obs.bitmap,
            "obs_correct": list(obs.correct),
            "obs_refreshed": obs.refreshed,
            "obs_loss": _r(obs.loss),
            "obs_grad_norm": _r(obs.grad_norm),
            "jsd": _r(d_js),
            "l2_drift": _r(d_l2),
            "score_inst": _r(inst),
            "s_ema": _r(s_ema),
            "s_ema_after": _r(self.score.s_ema),
            "phase": gs.phase.value,
            "layer2": iv.layer2_active,
            "suppression_started": iv.suppression_started,
            "reward_override": iv.reward_override,
            "shuffle": iv.shuffle_now,
            "reset_optimizers": iv.reset_optimizers,
            "entropy_boost": iv.entropy_boost,
            "entropy_coeff": c_ent,
            "penalty": _r(penalty),
            "ts_dynamic": _r(iv.ts_dynamic),
            "vq_loss": _r(loss_a.vq),
            "recon_loss": _r(loss_a.recon),
            "policy_loss_a": _r(loss_a.policy),
            "value_loss_a": _r(loss_a.value),
            "entropy_a": _r(loss_a.entropy),
            "policy_loss_b": _r(loss_b.policy),
            "value_loss_b": _r(loss_b.value),
            "entropy_b": _r(loss_b.entropy),
            "utilization": util,
            "reinit_entries": reinit,
            "reward_plateau": diag.reward_plateau,
            "observer_grad_failure": diag.observer_grad_failure,
            "evasion_flag": evasion,
            "tau_collapse": gs.tau_collapse,
            "tau_jsd": gs.tau_jsd,
        }
        if t % cfg.snapshot_every == 0 or iv.shuffle_now:
            rec["codebook"] = [float(v) for v in self.book.entries.ravel()]
        return rec

    def run(self) -> RunLog:
        for t in range(self.cfg.rounds):
            self.log.records.append(self.step(t))
        return self.log


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[RunLog, float]:
    """Run one seed; returns the log and its wall-clock seconds."""
    t0 = time.perf_counter()
    log = Simulation(cfg, seed).run()
    return log, time.perf_counter() - t0


def run(cfg: ExperimentConfig) -> list[RunLog]:
    cfg.validate()
    return [run_seed(cfg, seed)[0] for seed in cfg.seeds]

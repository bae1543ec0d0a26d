"""Experiment configuration: one flat dataclass, loadable from a key = value file."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .governor import GovernorConfig

GROUPS = ("baseline", "static", "drcb")


@dataclass(frozen=True)
class ExperimentConfig:
    group: str = "drcb"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    rounds: int = 1500

    # governor
    tp: float = 12.0
    ts_base: float = 18.0
    lam: float = 2.5
    k_suppress: int = 15
    cooldown: int = 20
    exploration: int = 30
    survival_reward: float = 0.1
    warmup: int = 50
    collapse_ratio: float = 0.80
    jsd_ratio: float = 0.50
    penalty_exponent: float = 1.0

    # observers
    n_pool: int = 8
    n_sub: int = 3
    t_refresh: int = 100

    # probes
    window: int = 50
    alpha: float = 0.1
    eps_train: float = 0.1
    eps_analysis: float = 1e-5
    eps_smooth: float = 1.0
    tau_l2: float | None = None

    # networks
    agent_lr: float = 1e-4
    observer_lr: float = 1e-3
    hidden: int = 64
    K: int = 32
    D: int = 64
    L: int = 2
    beta: float = 0.25
    temperature: float = 0.01
    recon_coeff: float = 1.0
    entropy_coeff: float = 0.01
    exploration_entropy_coeff: float = 0.05
    u_min: float = 0.6

    # io
    labels_path: str | None = None
    snapshot_every: int = 50

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.group not in GROUPS:
            problems.append(f"group must be one of {GROUPS}, got {self.group!r}")
        if not self.seeds:
            problems.append("at least one seed is required")
        if self.rounds <= self.warmup:
            problems.append(f"rounds ({self.rounds}) must exceed warmup ({self.warmup})")
        if self.tp <= 0 or self.ts_base <= 0:
            problems.append("tp and ts_base must be positive")
        if not 1 <= self.n_sub <= self.n_pool:
            problems.append("need 1 <= n_sub <= n_pool")
        if self.K < 2 or self.D < 1 or self.L < 1:
            problems.append("need K >= 2, D >= 1, L >= 1")
        if not 0 < self.alpha <= 1:
            problems.append("alpha must lie in (0, 1]")
        for name in ("eps_train", "eps_analysis", "eps_smooth", "beta", "temperature",
                     "agent_lr", "observer_lr"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if not 0 <= self.u_min <= 1:
            problems.append("u_min must lie in [0, 1]")
        if min(self.k_suppress, self.cooldown, self.exploration, self.warmup) < 0:
            problems.append("durations must be non-negative")
        if self.window < 1 or self.snapshot_every < 1:
            problems.append("window and snapshot_every must be >= 1")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))
        return self

    def governor(self) -> GovernorConfig:
        common = dict(tp=self.tp, ts_base=self.ts_base, lam=self.lam, k_suppress=self.k_suppress,
                      cooldown=self.cooldown, exploration=self.exploration,
                      survival_reward=self.survival_reward, warmup=self.warmup,
                      calibration_window=self.warmup, collapse_ratio=self.collapse_ratio,
                      jsd_ratio=self.jsd_ratio, penalty_exponent=self.penalty_exponent)
        if self.group == "baseline":
            return GovernorConfig(**common, layer2=False, suppression=False, circuit_break=False,
                                  dynamic_ts=False, auto_calibrate=False)
        if self.group == "static":
            return GovernorConfig(**common, layer2=False, dynamic_ts=False, auto_calibrate=False)
        return GovernorConfig(**common)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def coerce_value(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[name]
    raw = raw.strip()
    if "None" in ftype and raw.lower() in ("", "none"):
        return None
    if ftype.startswith("tuple"):
        return tuple(int(s) for s in raw.replace(",", " ").split())
    if ftype.startswith("int"):
        return int(raw)
    if ftype.startswith("float"):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments allowed) into typed overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[config]\n" + text)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for key, raw in cp["config"].items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = coerce_value(key, raw)
    return out


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values).validate()


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, list):
            v = ", ".join(str(s) for s in v)
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"

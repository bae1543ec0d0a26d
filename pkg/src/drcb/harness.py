"""Multi-run orchestration: group runs, three-group comparison, threshold sweep."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import analysis
from .config import GROUPS, ExperimentConfig
from .simulation import RunLog, run_seed


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *it) for it in items]
        return [f.result() for f in futures]


def run_group(cfg: ExperimentConfig, jobs: int = 1) -> list[tuple[RunLog, float]]:
    """Every seed of one config; each item is (log, wall-clock seconds)."""
    cfg.validate()
    return _map(run_seed, [(cfg, s) for s in cfg.seeds], jobs)


@dataclass
class Comparison:
    logs: dict[str, list[RunLog]]
    summaries: list[dict]
    stats: dict

    def report(self) -> str:
        return analysis.render_report(self.summaries, self.stats)


def compare(cfg: ExperimentConfig, jobs: int = 1, groups=GROUPS) -> Comparison:
    cfg.validate()
    items = [(cfg.replace(group=g), s) for g in groups for s in cfg.seeds]
    results = _map(run_seed, items, jobs)
    logs: dict[str, list[RunLog]] = {g: [] for g in groups}
    secs: dict[tuple[str, int], float] = {}
    for (c, seed), (log, sec) in zip(items, results):
        logs[c.group].append(log)
        secs[c.group, seed] = sec
    summaries = []
    for g in groups:
        for log in logs[g]:
            s = analysis.summarize(log, seconds=secs[g, log.seed])
            base = secs.get(("baseline", log.seed))
            s["overhead_vs_baseline"] = (secs[g, log.seed] / base - 1.0) if base else None
            summaries.append(s)
    return Comparison(logs, summaries, analysis.compare_groups(logs))


@dataclass(frozen=True)
class SweepCell:
    tp: float
    ts: float
    seed: int
    phase: str
    reward_var: float
    acc: float

    def to_dict(self) -> dict:
        return {"tp": self.tp, "ts": self.ts, "seed": self.seed, "phase": self.phase,
                "reward_var": self.reward_var, "acc": self.acc}


def _sweep_cell(cfg: ExperimentConfig, seed: int) -> SweepCell:
    log, _ = run_seed(cfg, seed)
    st = analysis.run_stats(log, cfg.warmup, cfg.collapse_ratio, cfg.jsd_ratio)
    return SweepCell(cfg.tp, cfg.ts_base, seed, analysis.classify_phase(st).value,
                     st.reward_var, st.acc)


def sweep(tp_values, ts_values, cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Phase grid: one row per (tp, ts) with the per-seed labels and the majority label."""
    tp_values, ts_values = list(tp_values), list(ts_values)
    if not tp_values or not ts_values:
        raise ValueError("sweep grids must be non-empty")
    cfgs = [cfg.replace(tp=float(tp), ts_base=float(ts)).validate()
            for tp in tp_values for ts in ts_values]
    cells = _map(_sweep_cell, [(c, s) for c in cfgs for s in cfg.seeds], jobs)
    rows = []
    n = len(cfg.seeds)
    for i, c in enumerate(cfgs):
        mine = cells[i * n:(i + 1) * n]
        labels = [m.phase for m in mine]
        rows.append({"tp": c.tp, "ts": c.ts_base,
                     "phase": max(sorted(set(labels)), key=labels.count),
                     "cells": [m.to_dict() for m in mine]})
    return rows


def write_logs(outdir: str | Path, logs) -> list[Path]:
    outdir = Path(outdir)
    return [log.write(outdir / f"{log.group}_seed{log.seed}.jsonl") for log in logs]


def write_jsonl(path: str | Path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path

"""Command-line entry point: ``drcb {run,compare,sweep,audit,ingest-idx}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness
from .config import ExperimentConfig, coerce_value, dump_config, load_config
from .env import IdxFormatError, encode_idx1, load_idx1
from .simulation import RunLog

_FIELDS = [f.name for f in dataclasses.fields(ExperimentConfig)]


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    g = p.add_argument_group("config overrides")
    for name in _FIELDS:
        if name not in skip:
            g.add_argument("--" + name.replace("_", "-"), dest=name, metavar="V")


def _config(args, **extra) -> ExperimentConfig:
    overrides = {n: coerce_value(n, getattr(args, n)) for n in _FIELDS
                 if getattr(args, n, None) is not None}
    overrides.update(extra)
    return load_config(args.config, **overrides)


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    summaries = []
    for log, sec in harness.run_group(cfg, args.jobs):
        path = log.write(out / f"{log.group}_seed{log.seed}.jsonl")
        summaries.append(analysis.summarize(log, seconds=sec))
        print(f"wrote {path} ({sec:.1f}s)")
    harness.write_jsonl(out / f"{cfg.group}_summary.jsonl", summaries)
    (out / "config.txt").write_text(dump_config(cfg))
    print(analysis.render_report(summaries), end="")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    cmp = harness.compare(cfg, args.jobs)
    for logs in cmp.logs.values():
        harness.write_logs(out, logs)
    harness.write_jsonl(out / "summary.jsonl", cmp.summaries)
    (out / "stats.json").write_text(json.dumps(cmp.stats, indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(dump_config(cfg))
    report = cmp.report()
    (out / "report.txt").write_text(report)
    print(report, end="")
    return 0


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.replace(",", " ").split()]


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = harness.sweep(_floats(args.tp_values), _floats(args.ts_values), cfg, args.jobs)
    if args.out:
        harness.write_jsonl(args.out, rows)
    print("tp\tts\tphase\tper-seed")
    for row in rows:
        print(f"{row['tp']:g}\t{row['ts']:g}\t{row['phase']}\t"
              + ", ".join(c["phase"] for c in row["cells"]))
    return 0


def cmd_audit(args) -> int:
    logs = [RunLog.read(p) for p in args.logs]
    summaries = [analysis.summarize(log, tail=min(args.tail, len(log))) for log in logs]
    by_group: dict[str, list[RunLog]] = {}
    for log in logs:
        by_group.setdefault(log.group, []).append(log)
    stats = analysis.compare_groups(by_group) if len(by_group) > 1 else None
    if args.summary:
        harness.write_jsonl(args.summary, summaries)
    print(analysis.render_report(summaries, stats), end="")
    if args.psc:
        for log in logs:
            rows = analysis.psc_table(log, len(log) - len(log) // 3)
            head, tail = analysis.split_tail(rows)
            print(f"\n# PSC {log.group} seed {log.seed} (final third)")
            print("sequence\toccurrences\tprimary\tpurity\tentropy")
            for r in head[:args.psc]:
                print(f"{list(r.sequence)}\t{r.occurrences}\t{r.primary_action.name}\t"
                      f"{100 * r.purity:.2f}%\t{r.entropy:.3f}")
            print(f"tail bucket: {tail.sequences} sequences, {tail.occurrences} occurrences")
    return 0


def cmd_ingest(args) -> int:
    try:
        labels = load_idx1(args.path)
    except (IdxFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    hist = np.bincount(labels, minlength=10)
    print(f"{args.path}: {len(labels)} labels; digit counts {hist.tolist()}")
    if args.out:
        out = Path(args.out)
        if out.suffix == ".txt":
            out.write_text("".join(f"{int(x)}\n" for x in labels))
        else:
            out.write_bytes(encode_idx1(labels))
        print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drcb", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one group over all seeds")
    _add_config_flags(r)
    r.add_argument("--out", default="runs", help="output directory")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="run all three groups and report statistics")
    _add_config_flags(c, skip=("group",))
    c.add_argument("--out", default="runs", help="output directory")
    c.set_defaults(fn=cmd_compare)

    s = sub.add_parser("sweep", help="phase grid over (tp, ts)")
    _add_config_flags(s, skip=("tp", "ts_base"))
    s.add_argument("--tp-values", required=True, help="comma-separated tp grid")
    s.add_argument("--ts-values", required=True, help="comma-separated ts grid")
    s.add_argument("--out", help="write grid rows as JSON lines")
    s.set_defaults(fn=cmd_sweep)

    a = sub.add_parser("audit", help="analyse existing round logs")
    a.add_argument("logs", nargs="+")
    a.add_argument("--tail", type=int, default=analysis.TAIL)
    a.add_argument("--summary", help="write per-run summary JSON lines here")
    a.add_argument("--psc", type=int, default=0, metavar="N", help="print top-N PSC rows")
    a.set_defaults(fn=cmd_audit)

    i = sub.add_parser("ingest-idx", help="validate or convert an IDX1 label file")
    i.add_argument("path")
    i.add_argument("--out", help="write as IDX1, or one label per line if it ends in .txt")
    i.set_defaults(fn=cmd_ingest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

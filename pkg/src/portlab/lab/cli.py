"""``portlab SUITE [--config PATH] [--out DIR] [--seed N] [--quiet]``.

Exit status: 0 when every verdict passes, 2 on a configuration error, 3 when
any verdict fails.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import SUITES, ConfigError, dump_resolved, load, resolve
from .records import all_pass, dumps
from .suites import RUNNERS

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT = 0, 2, 3


def thread_count() -> int:
    raw = os.environ.get("PORTLAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PORTLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("PORTLAB_THREADS must be >= 1")
    return n


def run_suite(cfg, out_dir=None, threads=None):
    """Run every seed of ``cfg`` and write outputs under ``out_dir/suite``.

    Returns (records, wall seconds per seed). Records are ordered by the seed
    list, whatever order the trials finish in.
    """
    trial_fn, summarize = RUNNERS[cfg.suite]
    threads = thread_count() if threads is None else threads

    def timed(seed):
        t0 = time.perf_counter()
        out = trial_fn(cfg, seed)
        return out, time.perf_counter() - t0

    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(cfg.seeds))) as pool:
            done = list(pool.map(timed, cfg.seeds))
    else:
        done = [timed(s) for s in cfg.seeds]
    trials = [t for t, _ in done]
    records = [r for t in trials for r in t.records]
    summary = summarize(cfg, trials) if summarize is not None else []
    records += summary
    walls = {str(s): w for s, (_, w) in zip(cfg.seeds, done)}
    if out_dir is not None:
        base = Path(out_dir) / cfg.suite
        base.mkdir(parents=True, exist_ok=True)
        (base / "manifest.json").write_text(dumps({"suite": cfg.suite, "config": dump_resolved(cfg)}),
                                            encoding="utf-8")
        for seed, trial in zip(cfg.seeds, trials):
            d = base / str(seed)
            d.mkdir(exist_ok=True)
            (d / "records.json").write_text(dumps(trial.records), encoding="utf-8")
            for name, text in trial.files.items():
                (d / name).write_text(text, encoding="utf-8")
        if summary:
            d = base / "summary"
            d.mkdir(exist_ok=True)
            (d / "records.json").write_text(dumps(summary), encoding="utf-8")
        (base / "timing.json").write_text(dumps({"wall_seconds": walls}), encoding="utf-8")
    return records, walls


def _line(rec):
    marks = ", ".join(f"{v['name']}: {'PASS' if v['pass'] else 'FAIL'} ({v['lhs']:.6g} {v['op']} {v['rhs']:.6g})"
                      for v in rec["verdicts"])
    line = f"[{rec['suite']} seed={rec['seed']} {rec['case']}] {marks or 'no verdict'}"
    if "worst_path" in rec["scalars"] and not all(v["pass"] for v in rec["verdicts"]):
        line += f" offending: {rec['scalars']['worst_path']}"
    return line


def build_parser():
    ap = argparse.ArgumentParser(prog="portlab", description="Run a proxy-distribution robustness suite.")
    ap.add_argument("suite", choices=SUITES)
    ap.add_argument("--config", type=Path, help="YAML config file (defaults apply to omitted keys)")
    ap.add_argument("--out", type=Path, help="output directory (overrides the config's 'output')")
    ap.add_argument("--seed", type=int, help="run this single seed instead of the config's seed list")
    ap.add_argument("--quiet", action="store_true", help="print only the final status line")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load(args.config) if args.config is not None else {}
        cfg = resolve(args.suite, raw, args.seed)
        threads = thread_count()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.output)
    records, _ = run_suite(cfg, out, threads)
    ok = all_pass(records)
    if not args.quiet:
        for rec in records:
            print(_line(rec))
    n = sum(len(r["verdicts"]) for r in records)
    failed = sum(not v["pass"] for r in records for v in r["verdicts"])
    print(f"{cfg.suite}: {n - failed}/{n} verdicts pass -> {out / cfg.suite}")
    return EXIT_OK if ok else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``dalap run``, ``dalap compare``, ``dalap selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import load_config, parse_framework_list, parse_int_list
from .errors import ConfigurationError
from .harness import NOT_REACHED, compare, emit, read_records, read_threshold, run_suite


def _cmd_run(args) -> int:
    suite = load_config(args.config)
    seeds = parse_int_list(args.seeds) if args.seeds else suite.seeds
    frameworks = parse_framework_list(args.frameworks) if args.frameworks else suite.frameworks
    jobs = args.jobs if args.jobs is not None else suite.jobs
    result = run_suite(suite, seeds=seeds, frameworks=frameworks, jobs=jobs)
    out = emit(result, args.out, suite.success_threshold, seeds=seeds, frameworks=frameworks)
    print(f"wrote {len(result.records)} runs to {out}")
    for framework, seed, error in result.failures:
        print(f"failed: {framework} seed {seed}: {error}", file=sys.stderr)
    _print_summary(result.records, suite.success_threshold)
    return 1 if result.failures else 0


def _print_summary(records, threshold: float) -> None:
    if not records:
        print("no completed runs")
        return
    summaries, pairs, _ = compare(records, threshold)
    print(f"{'framework':<10} {'final20':>9} {'auc':>10} {'to ' + format(threshold, 'g'):>12} {'seeds':>6}")
    for s in summaries:
        reached = s.episodes_to_threshold if s.episodes_to_threshold != NOT_REACHED else "-"
        print(f"{s.framework:<10} {s.final20_mean:>9.1f} {s.auc:>10.0f} {reached!s:>12} {s.seeds:>6}")
    for p in pairs:
        print(
            f"paired AUC {p.framework_a} vs {p.framework_b}: "
            f"{p.wins_a}-{p.wins_b} ({p.ties} ties, {p.paired_seeds} seeds)"
        )


def _cmd_compare(args) -> int:
    result = read_records(args.input)
    _print_summary(result.records, read_threshold(args.input))
    return 0


def _cmd_selftest(args) -> int:
    from .checks import ALL_CHECKS, QUICK_ARGS

    failed = 0
    for number, check in ALL_CHECKS.items():
        if number == 7 and not args.full:
            print("[SKIP] 7. cart-pole reproduction: pass --full to run the 10-seed comparison")
            continue
        kwargs = {} if args.full else QUICK_ARGS.get(number, {})
        result = check(**kwargs)
        print(result.line(), flush=True)
        failed += not result.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dalap", description="Prioritized replay experiments on small control tasks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seed sweep and write CSV outputs")
    run.add_argument("--config", required=True, type=Path, help="INI config file")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seeds", help="comma-separated seed labels (overrides the config)")
    run.add_argument("--frameworks", help="comma-separated frameworks (overrides the config)")
    run.add_argument("--jobs", type=int, help="parallel runs (overrides the config)")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="summarise an output directory")
    cmp_.add_argument("--in", dest="input", required=True, type=Path, help="directory written by run")
    cmp_.set_defaults(func=_cmd_compare)

    selftest = sub.add_parser("selftest", help="run the acceptance checks at reduced size")
    selftest.add_argument("--full", action="store_true", help="full sizes, including the cart-pole comparison")
    selftest.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

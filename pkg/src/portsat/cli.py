"""Command line: ``portsat solve`` and ``portsat bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench import BenchRow, SuiteConfig, run_suite, write_csv, write_jsonl
from .clausedb import DEFAULT_MAX_WORKERS, SharingMode
from .dimacs import ParseError, emit_result, parse_cnf
from .portfolio import PortfolioConfig, run_portfolio


def _core_list(text: str) -> tuple[int, ...]:
    try:
        cores = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated core ids, got {text!r}") from None
    if not cores or min(cores) < 0:
        raise argparse.ArgumentTypeError("core ids must be non-negative")
    return cores


def _positive_float(text: str) -> float:
    x = float(text)
    if x <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="portsat", description=__doc__)
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one DIMACS CNF file")
    s.add_argument("input", help="DIMACS CNF file, or - for stdin")
    s.add_argument("--threads", type=int, default=1, help="number of workers (default 1)")
    s.add_argument("--sharing", choices=[m.value for m in SharingMode], default="none",
                   help="physical clause sharing strategy (default none)")
    s.add_argument("--same-search", action="store_true",
                   help="configure every worker identically")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--timeout", type=_positive_float, default=None, help="seconds")
    s.add_argument("--stats-json", help="write a run summary row to this file")
    s.add_argument("--affinity", type=_core_list, help="core per worker, e.g. 0,1,2,3")
    s.add_argument("--cache-line", type=int, choices=[64, 128], default=64,
                   help="binary node size in bytes (default 64)")
    s.add_argument("--max-workers", type=int, default=DEFAULT_MAX_WORKERS,
                   help="width of the per-clause worker flags")

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", help="suite configuration (JSON)")
    b.add_argument("--out", default="-", help="JSON-lines report (default stdout)")
    b.add_argument("--csv", help="also write the rows as CSV")
    return parser


def main_solve(opts: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if opts.threads < 1:
        parser.error("--threads must be >= 1")
    if opts.max_workers < 1 or opts.threads > opts.max_workers:
        parser.error("--threads must not exceed --max-workers")
    if opts.affinity is not None and len(opts.affinity) < opts.threads:
        parser.error("--affinity must list a core for every thread")

    try:
        if opts.input == "-":
            formula = parse_cnf(sys.stdin.buffer)
        else:
            with open(opts.input, "rb") as fh:
                formula = parse_cnf(fh)
    except (OSError, ParseError) as e:
        print(f"c error: {e}", file=sys.stderr)
        return 1

    config = PortfolioConfig(workers=opts.threads, sharing=SharingMode(opts.sharing),
                             same_search=opts.same_search, base_seed=opts.seed,
                             timeout=opts.timeout, affinity=opts.affinity,
                             cache_line=opts.cache_line, max_workers=opts.max_workers)
    result, stats = run_portfolio(formula, config)
    code = emit_result(result, formula, sys.stdout)
    sys.stdout.flush()

    if opts.stats_json:
        row = BenchRow(file=opts.input, mode=opts.sharing, workers=opts.threads,
                       status=result.status.value, median_s=result.stats.wall_time,
                       stddev_s=None, decay=None,
                       per_worker=[s.search_counts() for s in stats])
        try:
            with open(opts.stats_json, "w") as fh:
                json.dump(row.to_dict(), fh)
                fh.write("\n")
        except OSError as e:
            print(f"c error: cannot write stats: {e}", file=sys.stderr)
            return 1
    return code


def main_bench(opts: argparse.Namespace) -> int:
    try:
        suite = SuiteConfig.load(opts.suite)
    except (OSError, ValueError, TypeError, KeyError) as e:
        print(f"error: cannot read suite {opts.suite}: {e}", file=sys.stderr)
        return 1
    report = run_suite(suite)
    if opts.out == "-":
        write_jsonl(report.rows, sys.stdout)
    else:
        with open(opts.out, "w") as fh:
            write_jsonl(report.rows, fh)
        meta = Path(opts.out).with_suffix(".meta.json")
        meta.write_text(json.dumps({**report.metadata, "runs": report.runs}, indent=1) + "\n")
    if opts.csv:
        with open(opts.csv, "w", newline="") as fh:
            write_csv(report.rows, fh)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    opts = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if opts.quiet else logging.INFO,
                        format="c %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if opts.command == "solve":
        return main_solve(opts, parser)
    return main_bench(opts)


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness: worker-count sweeps, decay ratios and cache counters.

Every measured run executes alone, one after another. A row of the report
aggregates the repeats of one (file, sharing mode, worker count) cell.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import re
import shlex
import shutil
import statistics
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TextIO

from .clausedb import DEFAULT_LINE_SIZE, SharingMode
from .dimacs import parse_cnf
from .portfolio import PortfolioConfig, run_portfolio

log = logging.getLogger(__name__)

LLC_MISS_FORMULA = "100 * LLC-load-misses / LLC-loads"
DEFAULT_COUNTER_TEMPLATE = "perf stat -x, -e LLC-loads,LLC-load-misses -- {cmd}"


class DecayError(ValueError):
    pass


def decay_ratio(t_w: float, t_1: float) -> float:
    """Slowdown of a W-worker run relative to the single-worker run."""
    if t_1 <= 0:
        raise DecayError(f"undefined decay ratio: single-worker time is {t_1}")
    return t_w / t_1


@dataclass
class CounterSample:
    loads: int
    misses: int

    @property
    def miss_pct(self) -> float:
        return 100.0 * self.misses / self.loads if self.loads else 0.0


_EVENTS = ("LLC-loads", "LLC-load-misses")


def parse_counter_output(text: str) -> Optional[CounterSample]:
    """Read LLC load/miss totals from ``perf stat`` output (CSV or table)."""
    values = {}
    for line in text.splitlines():
        if "LLC-load" not in line:
            continue
        parts = [p.strip() for p in line.split(",")]
        event = next((p.split(":")[0] for p in parts if p.split(":")[0] in _EVENTS), None)
        if event is not None:
            raw = parts[0]
        else:
            m = re.match(r"\s*(\S+)\s+(LLC-load-misses|LLC-loads)\b", line)
            if not m:
                continue
            raw, event = m.groups()
        try:
            values[event] = int(float(raw.replace(",", "")))
        except ValueError:
            # "<not supported>" / "<not counted>"
            return None
    if len(values) != 2:
        return None
    return CounterSample(values["LLC-loads"], values["LLC-load-misses"])


def counter_facility_available(template: str = DEFAULT_COUNTER_TEMPLATE) -> bool:
    argv = shlex.split(template)
    return bool(argv) and shutil.which(argv[0]) is not None


def sample_counters(command: Sequence[str], template: Optional[str],
                    timeout: Optional[float] = None) -> tuple[int, Optional[CounterSample]]:
    """Run ``command`` wrapped by the counter ``template``.

    ``{cmd}`` in the template is replaced by the command's arguments. When
    no template is given or the counter tool is missing, the command runs
    unwrapped and no sample is returned.
    """
    command = list(command)
    if not template or not counter_facility_available(template):
        if template:
            log.warning("counter facility %r unavailable; timing only", shlex.split(template)[0])
        proc = subprocess.run(command, capture_output=True, text=True, timeout=timeout)
        return proc.returncode, None
    argv = []
    for tok in shlex.split(template):
        if tok == "{cmd}":
            argv.extend(command)
        else:
            argv.append(tok)
    proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    sample = parse_counter_output(proc.stderr + "\n" + proc.stdout)
    if sample is None:
        log.warning("could not read LLC counters from %r", argv[0])
    return proc.returncode, sample


@dataclass
class SuiteConfig:
    files: list[str]
    worker_counts: list[int] = field(default_factory=lambda: [1])
    sharing_modes: list[SharingMode] = field(default_factory=lambda: [SharingMode.NONE])
    same_search: bool = True
    repeats: int = 1
    timeout: Optional[float] = None
    counters: Optional[str] = None
    label: str = ""
    seed: int = 0
    cache_line: int = DEFAULT_LINE_SIZE

    def __post_init__(self):
        self.sharing_modes = [SharingMode.parse(m) for m in self.sharing_modes]
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.worker_counts:
            raise ValueError("worker_counts must not be empty")
        if list(self.worker_counts) != sorted(self.worker_counts) or min(self.worker_counts) < 1:
            raise ValueError("worker_counts must be positive and sorted ascending")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "SuiteConfig":
        data = dict(data)
        files = [str(f) for f in data.pop("files")]
        if base_dir is not None:
            files = [f if os.path.isabs(f) else str(base_dir / f) for f in files]
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown suite fields: {sorted(unknown)}")
        return cls(files=files, **data)

    @classmethod
    def load(cls, path: "str | Path") -> "SuiteConfig":
        path = Path(path)
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data, base_dir=path.parent)


@dataclass
class RunOutcome:
    """What a runner reports about one measured run."""
    status: str
    per_worker: list[dict] = field(default_factory=list)
    counters: Optional[CounterSample] = None


@dataclass
class BenchRow:
    file: str
    mode: str
    workers: int
    status: str
    median_s: Optional[float]
    stddev_s: Optional[float]
    decay: Optional[float]
    per_worker: list[dict] = field(default_factory=list)
    llc_miss_pct: Optional[float] = None
    llc_miss_stddev: Optional[float] = None
    label: str = ""
    error: Optional[str] = None

    def to_dict(self) -> dict:
        d = {
            "file": self.file,
            "mode": self.mode,
            "workers": self.workers,
            "status": self.status,
            "median_s": self.median_s,
            "stddev_s": self.stddev_s,
            "decay": self.decay,
        }
        if self.llc_miss_pct is not None:
            d["llc_miss_pct"] = self.llc_miss_pct
            d["llc_miss_stddev"] = self.llc_miss_stddev
        d["per_worker"] = self.per_worker
        if self.label:
            d["label"] = self.label
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchRow":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    # (file, mode, workers, repeat, start, end) for every measured run
    runs: list[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=lambda: {"llc_miss_formula": LLC_MISS_FORMULA,
                                                    "timing_aggregate": "median"})

    def row(self, file: str, mode: str, workers: int) -> BenchRow:
        for r in self.rows:
            if (r.file, r.mode, r.workers) == (file, mode, workers):
                return r
        raise KeyError((file, mode, workers))


Runner = Callable[[str, SharingMode, int, SuiteConfig], RunOutcome]


class InProcessRunner:
    """Solve in this interpreter; parsed formulas are cached per file."""

    def __init__(self):
        self._formulas = {}

    def __call__(self, path: str, mode: SharingMode, workers: int, cfg: SuiteConfig) -> RunOutcome:
        formula = self._formulas.get(path)
        if formula is None:
            with open(path, "rb") as fh:
                formula = parse_cnf(fh)
            self._formulas[path] = formula
        pcfg = PortfolioConfig(workers=workers, sharing=mode, same_search=cfg.same_search,
                               base_seed=cfg.seed, timeout=cfg.timeout, cache_line=cfg.cache_line)
        result, stats = run_portfolio(formula, pcfg)
        return RunOutcome(result.status.value, [s.search_counts() for s in stats])


class SubprocessRunner:
    """Run the ``solve`` command in a child process, optionally under counters."""

    def __call__(self, path: str, mode: SharingMode, workers: int, cfg: SuiteConfig) -> RunOutcome:
        with tempfile.TemporaryDirectory() as tmp:
            stats_path = os.path.join(tmp, "stats.json")
            cmd = [sys.executable, "-m", "portsat", "solve", path,
                   "--threads", str(workers), "--sharing", mode.value,
                   "--seed", str(cfg.seed), "--cache-line", str(cfg.cache_line),
                   "--stats-json", stats_path]
            if cfg.same_search:
                cmd.append("--same-search")
            if cfg.timeout is not None:
                cmd += ["--timeout", str(cfg.timeout)]
            code, sample = sample_counters(cmd, cfg.counters)
            if code not in (0, 10, 20):
                raise RuntimeError(f"solver exited with code {code}")
            with open(stats_path) as fh:
                row = json.load(fh)
        return RunOutcome(row["status"], row.get("per_worker", []), sample)


def _spread(values: list[float]) -> Optional[float]:
    return statistics.stdev(values) if len(values) >= 2 else None


def run_suite(cfg: SuiteConfig, runner: Optional[Runner] = None,
              clock: Callable[[], float] = time.perf_counter) -> BenchReport:
    """Execute every (file, mode, workers, repeat) run in turn and aggregate."""
    if runner is None:
        runner = SubprocessRunner() if cfg.counters else InProcessRunner()
    report = BenchReport()
    report.metadata.update(label=cfg.label, same_search=cfg.same_search, repeats=cfg.repeats)
    for path in cfg.files:
        for mode in cfg.sharing_modes:
            baseline = None
            for workers in cfg.worker_counts:
                times, statuses, misses = [], [], []
                per_worker: list[dict] = []
                error = None
                for rep in range(cfg.repeats):
                    start = clock()
                    try:
                        out = runner(path, mode, workers, cfg)
                    except Exception as e:
                        end = clock()
                        report.runs.append((path, mode.value, workers, rep, start, end))
                        error = f"{type(e).__name__}: {e}"
                        log.warning("run failed for %s (%s, W=%d): %s", path, mode.value, workers, error)
                        break
                    end = clock()
                    report.runs.append((path, mode.value, workers, rep, start, end))
                    times.append(end - start)
                    statuses.append(out.status)
                    per_worker = out.per_worker
                    if out.counters is not None:
                        misses.append(out.counters.miss_pct)
                row = BenchRow(path, mode.value, workers, "ERROR", None, None, None,
                               label=cfg.label, error=error)
                if error is None:
                    row.status = statuses[0] if len(set(statuses)) == 1 else "MIXED"
                    row.median_s = statistics.median(times)
                    row.stddev_s = _spread(times)
                    row.per_worker = per_worker
                    if misses and len(misses) == len(times):
                        row.llc_miss_pct = statistics.mean(misses)
                        row.llc_miss_stddev = _spread(misses)
                    if workers == 1:
                        baseline = row.median_s
                    if cfg.same_search and baseline is not None:
                        try:
                            row.decay = decay_ratio(row.median_s, baseline)
                        except DecayError as e:
                            row.error = str(e)
                report.rows.append(row)
    return report


def write_jsonl(rows: Iterable[BenchRow], out: TextIO) -> None:
    for row in rows:
        out.write(json.dumps(row.to_dict(), sort_keys=False) + "\n")


def read_jsonl(src: TextIO) -> list[BenchRow]:
    return [BenchRow.from_dict(json.loads(line)) for line in src if line.strip()]


CSV_COLUMNS = ["file", "mode", "workers", "status", "median_s", "stddev_s", "decay",
               "llc_miss_pct", "llc_miss_stddev", "label", "error", "per_worker"]


def write_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        d = row.to_dict()
        d["per_worker"] = json.dumps(d.get("per_worker", []))
        writer.writerow({k: d.get(k) for k in CSV_COLUMNS})


def decay_table(rows: Iterable[BenchRow]) -> dict:
    """``{(file, mode): {workers: decay}}`` for rows that carry a decay."""
    table: dict = {}
    for r in rows:
        if r.decay is not None:
            table.setdefault((r.file, r.mode), {})[r.workers] = r.decay
    return table

"""Run several diversified workers over one formula.

The first worker to finish with SAT or UNSAT wins and the others are
interrupted. In same-search mode every worker gets the identical
configuration and losers run to completion, so per-worker statistics can
be compared one-for-one.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from dataclasses import dataclass, replace
from typing import Optional

from .clausedb import (DEFAULT_LINE_SIZE, DEFAULT_MAX_WORKERS, SharingMode,
                       census, load_clauses, make_views)
from .dimacs import Formula
from .engine import EngineConfig, Solver
from .model import SolveResult, SolveStats, Status

log = logging.getLogger(__name__)

# (luby_unit multiplier, initial phase) per diversified worker
DIVERSIFICATION_TABLE = (
    (1.0, False),
    (0.5, True),
    (2.0, False),
    (1.0, True),
    (0.25, False),
    (4.0, True),
    (0.5, False),
    (2.0, True),
)


class CancellationToken:
    """Shared stop flag plus a first-write-wins winner slot."""

    def __init__(self):
        self._event = threading.Event()
        self._lock = threading.Lock()
        self.reason: Optional[str] = None
        self.winner: Optional[tuple[int, SolveResult]] = None

    def is_set(self) -> bool:
        return self._event.is_set()

    def cancel(self, reason: str = "cancelled") -> None:
        with self._lock:
            if not self._event.is_set():
                self.reason = reason
                self._event.set()

    def offer(self, worker: int, result: SolveResult) -> bool:
        with self._lock:
            if self.winner is None:
                self.winner = (worker, result)
                return True
            return False


@dataclass(frozen=True)
class PortfolioConfig:
    workers: int = 1
    sharing: SharingMode = SharingMode.NONE
    same_search: bool = False
    base_seed: int = 0
    timeout: Optional[float] = None
    affinity: Optional[tuple[int, ...]] = None
    cache_line: int = DEFAULT_LINE_SIZE
    max_workers: int = DEFAULT_MAX_WORKERS

    def __post_init__(self):
        object.__setattr__(self, "sharing", SharingMode.parse(self.sharing))
        if self.workers < 1:
            raise ValueError("at least one worker is required")
        if self.workers > self.max_workers:
            raise ValueError(f"{self.workers} workers exceed the flag width {self.max_workers}")
        if self.affinity is not None:
            object.__setattr__(self, "affinity", tuple(self.affinity))
            if len(self.affinity) < self.workers:
                raise ValueError("affinity list must name a core for every worker")


def _mix_seed(base_seed: int, worker_id: int) -> int:
    digest = hashlib.blake2b(f"{base_seed}:{worker_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def diversify(base_seed: int, worker_id: int, same_search: bool,
              template: Optional[EngineConfig] = None) -> EngineConfig:
    template = template or EngineConfig()
    if same_search:
        return replace(template, seed=base_seed)
    unit_scale, phase = DIVERSIFICATION_TABLE[worker_id % len(DIVERSIFICATION_TABLE)]
    return replace(template,
                   seed=_mix_seed(base_seed, worker_id),
                   luby_unit=max(1, int(template.luby_unit * unit_scale)),
                   phase_default=phase)


def pin_worker(worker_id: int, core_id: Optional[int]) -> bool:
    """Best-effort binding of the calling thread to ``core_id``."""
    if core_id is None:
        return False
    setaffinity = getattr(os, "sched_setaffinity", None)
    if setaffinity is None:
        log.warning("worker %d: core affinity is not supported on this platform", worker_id)
        return False
    try:
        setaffinity(0, {core_id})
    except (OSError, ValueError) as e:
        log.warning("worker %d: could not bind to core %d: %s", worker_id, core_id, e)
        return False
    return True


class Portfolio:
    """One portfolio run; keeps views and solvers around for inspection."""

    def __init__(self, formula: Formula, config: PortfolioConfig,
                 engine_template: Optional[EngineConfig] = None, debug: bool = False):
        self.formula = formula
        self.config = config
        self.views = make_views(config.sharing, formula.num_vars, config.workers,
                                config.cache_line, config.max_workers, debug=debug)
        load_clauses(self.views, formula.clauses)
        self.engine_configs = [diversify(config.base_seed, w, config.same_search, engine_template)
                               for w in range(config.workers)]
        self.token = CancellationToken()
        self.solvers = [Solver(formula, cfg, view, self.token)
                        for cfg, view in zip(self.engine_configs, self.views)]
        self.results: list[Optional[SolveResult]] = [None] * config.workers

    def _work(self, w: int) -> None:
        if self.config.affinity is not None:
            pin_worker(w, self.config.affinity[w])
        try:
            result = self.solvers[w].solve()
        except Exception:
            log.exception("worker %d failed", w)
            result = SolveResult(Status.UNKNOWN, reason="failed", stats=self.solvers[w].stats)
        self.results[w] = result
        if result.status is not Status.UNKNOWN:
            if self.token.offer(w, result) and not self.config.same_search:
                self.token.cancel("cancelled")

    def run(self) -> tuple[SolveResult, list[SolveStats]]:
        cfg = self.config
        timer = None
        if cfg.timeout is not None:
            timer = threading.Timer(cfg.timeout, self.token.cancel, ("timeout",))
            timer.daemon = True
            timer.start()
        try:
            if cfg.workers == 1:
                self._work(0)
            else:
                threads = [threading.Thread(target=self._work, args=(w,), name=f"worker-{w}")
                           for w in range(cfg.workers)]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
        finally:
            if timer is not None:
                timer.cancel()
        stats = [r.stats if r is not None else SolveStats() for r in self.results]
        if self.token.winner is not None:
            return self.token.winner[1], stats
        reason = self.token.reason if self.token.reason == "timeout" else "failed"
        if all(r is not None and r.reason == "cancelled" for r in self.results):
            reason = "cancelled"
        return SolveResult(Status.UNKNOWN, reason=reason), stats

    @property
    def winner(self) -> Optional[int]:
        return None if self.token.winner is None else self.token.winner[0]

    def census(self) -> dict:
        return census(self.views)


def run_portfolio(formula: Formula, config: PortfolioConfig,
                  engine_template: Optional[EngineConfig] = None) -> tuple[SolveResult, list[SolveStats]]:
    return Portfolio(formula, config, engine_template).run()

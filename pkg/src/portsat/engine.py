"""Sequential CDCL worker.

One ``Solver`` runs the conflict-driven search over a ``DbView``: binary
implication lists and two-watched-literal propagation, first-UIP learning
with recursive lemma minimization, EVSIDS branching with phase saving,
Luby restarts and periodic lemma cleanup.
"""

from __future__ import annotations

import heapq
import random
import time
from collections import namedtuple
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .clausedb import DbView, NaryClause, load_clauses, make_views
from .dimacs import Formula
from .model import FALSE, UNDEF, SolveResult, SolveStats, Status, Trail, verify_model

BinaryConflict = namedtuple("BinaryConflict", "literal implied")
NaryConflict = namedtuple("NaryConflict", "clause")

# seen[] marks used during analysis and minimization
_SEEN = 1
_REMOVABLE = 2
_FAILED = 3


def luby(i: int) -> int:
    """The ``i``-th term (1-based) of the Luby sequence 1,1,2,1,1,2,4,..."""
    if i < 1:
        raise ValueError("luby index starts at 1")
    while True:
        k = i.bit_length()
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    vsids_bump_growth: float = 1 / 0.95
    vsids_rescale_threshold: float = 1e100
    luby_unit: int = 512
    cleanup_interval: int = 20000
    phase_default: bool = False
    minimize: bool = True
    # full watch-invariant scan at every propagation fixpoint (slow)
    debug_invariants: bool = False

    def __post_init__(self):
        if not self.vsids_bump_growth > 1:
            raise ValueError("vsids_bump_growth must exceed 1")
        if not self.vsids_rescale_threshold > 0:
            raise ValueError("vsids_rescale_threshold must be positive")
        if self.luby_unit < 1 or self.cleanup_interval < 1:
            raise ValueError("luby_unit and cleanup_interval must be >= 1")


class Vsids:
    """Exponential VSIDS activities with a lazy max-heap.

    Heap entries are ``(-activity, var)`` so ties go to the lowest index;
    entries whose activity is out of date are skipped on pop.
    """

    def __init__(self, num_vars: int, growth: float = 1 / 0.95,
                 threshold: float = 1e100, rng: Optional[random.Random] = None):
        self.growth = growth
        self.threshold = threshold
        self.increment = 1.0
        if rng is None:
            self.activity = [0.0] * num_vars
        else:
            self.activity = [rng.random() * 1e-3 for _ in range(num_vars)]
        self.rebuild()

    def rebuild(self) -> None:
        self.heap = [(-a, v) for v, a in enumerate(self.activity)]
        heapq.heapify(self.heap)

    def push(self, var: int) -> None:
        heapq.heappush(self.heap, (-self.activity[var], var))

    def bump(self, variables) -> None:
        act, inc, heap = self.activity, self.increment, self.heap
        top = 0.0
        for v in variables:
            a = act[v] + inc
            act[v] = a
            heapq.heappush(heap, (-a, v))
            if a > top:
                top = a
        self.increment = inc * self.growth
        if top >= self.threshold:
            self.rescale()
        elif len(heap) > 4 * len(act) + 64:
            self.rebuild()

    def rescale(self) -> None:
        f = 1.0 / self.threshold
        self.activity = [a * f for a in self.activity]
        self.increment *= f
        self.rebuild()

    def pop_max(self, vals) -> Optional[int]:
        heap, act = self.heap, self.activity
        while heap:
            neg, v = heapq.heappop(heap)
            if vals[v] == UNDEF and -neg == act[v]:
                return v
        return None


def check_watch_invariant(view: DbView, vals) -> list[str]:
    """Scan every watched clause of ``view`` for invariant violations.

    At a conflict-free propagation fixpoint each clause must be satisfied or
    have two non-false watched literals, and the watch chains must hold
    exactly the thread clauses watching each literal.
    """
    problems = []
    expected = {}
    for tc in view.thread_clauses:
        lits = tc.clause.lits
        if tc.wl0 == tc.wl1 or tc.wl0 not in lits or tc.wl1 not in lits:
            problems.append(f"bad watch pair {tc.watched()} on {lits}")
        expected.setdefault(tc.wl0, set()).add(id(tc))
        expected.setdefault(tc.wl1, set()).add(id(tc))
        if any(vals[x >> 1] ^ (x & 1) == 1 for x in lits):
            continue
        for w in (tc.wl0, tc.wl1):
            if vals[w >> 1] ^ (w & 1) == FALSE:
                problems.append(f"false watch {w} in unsatisfied clause {lits}")
    for lit in range(len(view.watches)):
        got = [id(tc) for tc in view.watch_chain(lit)]
        if len(got) != len(set(got)) or set(got) != expected.get(lit, set()):
            problems.append(f"watch chain of literal {lit} is inconsistent")
    return problems


class Solver:
    """A CDCL search bound to one database view.

    ``lemma_hook(learned, minimized)`` is called after every conflict
    analysis with the lemma before and after minimization.
    """

    def __init__(self, formula: Formula, config: EngineConfig, view: DbView,
                 cancel=None, lemma_hook: Optional[Callable] = None):
        self.formula = formula
        self.config = config
        self.view = view
        self.cancel = cancel
        self.lemma_hook = lemma_hook
        n = formula.num_vars
        self.trail = Trail(n)
        self.rng = random.Random(config.seed)
        self.vsids = Vsids(n, config.vsids_bump_growth,
                           config.vsids_rescale_threshold, self.rng)
        self.phase = [config.phase_default] * n
        self.seen = bytearray(n)
        self.qhead = 0
        self.stats = SolveStats()
        self.invariant_violations: list[str] = []
        self.invariant_scans = 0

    # assignment

    def assign(self, lit: int, reason=None) -> None:
        self.trail.push(lit, reason)

    def backjump(self, level: int) -> None:
        trail = self.trail
        if level >= trail.decision_level:
            return
        phase, vsids = self.phase, self.vsids
        for lit in trail.backjump(level):
            v = lit >> 1
            phase[v] = not (lit & 1)
            vsids.push(v)
        if self.qhead > len(trail.stack):
            self.qhead = len(trail.stack)

    # propagation

    def bcp(self):
        """Propagate queued assignments; returns a conflict or None."""
        trail = self.trail
        stack, vals, level, reason = trail.stack, trail.vals, trail.level, trail.reason
        lvl = len(trail.level_marks)
        view = self.view
        heads = view.watches
        bins = view.binaries
        slab, first, words = bins.slab, bins.first, bins.words
        qhead = self.qhead
        props = 0
        try:
            while qhead < len(stack):
                p = stack[qhead]
                qhead += 1
                props += 1

                node = first[p]
                while node:
                    base = (node - 1) * words
                    used = slab[base + 2]
                    for q in slab[base + 3: base + 3 + used]:
                        qv = q >> 1
                        v = vals[qv]
                        if v == UNDEF:
                            vals[qv] = (q & 1) ^ 1
                            level[qv] = lvl
                            reason[qv] = p
                            stack.append(q)
                        elif v ^ (q & 1) == FALSE:
                            return BinaryConflict(p, q)
                    node = slab[base] | (slab[base + 1] << 32)

                f = p ^ 1
                prev = None
                tc = heads[f]
                while tc is not None:
                    if tc.wl0 == f:
                        other = tc.wl1
                        nxt = tc.nw0
                        slot0 = True
                    else:
                        other = tc.wl0
                        nxt = tc.nw1
                        slot0 = False
                    ov = vals[other >> 1] ^ (other & 1)
                    if ov == 1:
                        prev = tc
                        tc = nxt
                        continue
                    clause = tc.clause
                    for r in clause.lits:
                        if r != f and r != other and vals[r >> 1] ^ (r & 1) != FALSE:
                            if prev is None:
                                heads[f] = nxt
                            elif prev.wl0 == f:
                                prev.nw0 = nxt
                            else:
                                prev.nw1 = nxt
                            if slot0:
                                tc.wl0 = r
                                tc.nw0 = heads[r]
                            else:
                                tc.wl1 = r
                                tc.nw1 = heads[r]
                            heads[r] = tc
                            break
                    else:
                        if ov == FALSE:
                            return NaryConflict(clause)
                        ovar = other >> 1
                        vals[ovar] = (other & 1) ^ 1
                        level[ovar] = lvl
                        reason[ovar] = clause
                        stack.append(other)
                        prev = tc
                    tc = nxt
            return None
        finally:
            self.qhead = qhead
            self.stats.propagations += props

    # learning

    def _mark_active(self, clause: NaryClause) -> None:
        clause.active[self.view.worker] = 1

    def analyze_conflict(self, conflict) -> tuple[list[int], int, list[int]]:
        """First-UIP analysis.

        Returns ``(lemma, backjump_level, bumped_vars)``; ``lemma[0]`` is
        the negated UIP and ``lemma[1]`` (if any) has the backjump level.
        """
        trail = self.trail
        stack, level, reason = trail.stack, trail.level, trail.reason
        seen = self.seen
        cur = trail.decision_level
        worker = self.view.worker

        if isinstance(conflict, BinaryConflict):
            lits = (conflict.literal ^ 1, conflict.implied)
        else:
            lits = conflict.clause.lits
            conflict.clause.active[worker] = 1

        lemma = [0]
        bumped = []
        pending = 0
        idx = len(stack) - 1
        p = -1
        while True:
            for q in lits:
                v = q >> 1
                if q == p or seen[v] or level[v] == 0:
                    continue
                seen[v] = _SEEN
                bumped.append(v)
                if level[v] == cur:
                    pending += 1
                else:
                    lemma.append(q)
            while not seen[stack[idx] >> 1]:
                idx -= 1
            p = stack[idx]
            idx -= 1
            seen[p >> 1] = 0
            pending -= 1
            if pending == 0:
                break
            r = reason[p >> 1]
            if type(r) is int:
                lits = (r ^ 1,)
            else:
                r.active[worker] = 1
                lits = r.lits
        lemma[0] = p ^ 1

        learned = list(lemma)
        if self.config.minimize:
            lemma = self._minimize(lemma)
        else:
            for q in lemma[1:]:
                seen[q >> 1] = 0

        bj = 0
        if len(lemma) > 1:
            best = 1
            for i in range(2, len(lemma)):
                if level[lemma[i] >> 1] > level[lemma[best] >> 1]:
                    best = i
            lemma[1], lemma[best] = lemma[best], lemma[1]
            bj = level[lemma[1] >> 1]
        if self.lemma_hook is not None:
            self.lemma_hook(learned, list(lemma))
        return lemma, bj, bumped

    def minimize_lemma(self, lemma: Sequence[int]) -> list[int]:
        """Minimize a first-UIP lemma against the current trail."""
        seen = self.seen
        for q in lemma[1:]:
            seen[q >> 1] = _SEEN
        return self._minimize(list(lemma))

    def _minimize(self, lemma: list[int]) -> list[int]:
        # expects seen[] == _SEEN for every non-UIP lemma variable
        reason = self.trail.reason
        seen = self.seen
        touched: list[int] = []
        out = [lemma[0]]
        for q in lemma[1:]:
            if reason[q >> 1] is None or not self._removable(q >> 1, touched):
                out.append(q)
        for q in lemma[1:]:
            seen[q >> 1] = 0
        for v in touched:
            seen[v] = 0
        return out

    def _antecedents(self, var: int) -> list[int]:
        r = self.trail.reason[var]
        if type(r) is int:
            return [r >> 1]
        return [x >> 1 for x in r.lits if x >> 1 != var]

    def _removable(self, var: int, touched: list[int]) -> bool:
        level, reason = self.trail.level, self.trail.reason
        seen = self.seen
        path = [(var, iter(self._antecedents(var)))]
        while path:
            v, ants = path[-1]
            for u in ants:
                s = seen[u]
                if level[u] == 0 or s == _SEEN or s == _REMOVABLE:
                    continue
                if reason[u] is None or s == _FAILED:
                    for w, _ in path[1:]:
                        seen[w] = _FAILED
                        touched.append(w)
                    return False
                path.append((u, iter(self._antecedents(u))))
                break
            else:
                path.pop()
                if path:
                    seen[v] = _REMOVABLE
                    touched.append(v)
        return True

    def learn(self, lemma: list[int]) -> None:
        """Store ``lemma`` (already backjumped) and assert its first literal."""
        view = self.view
        self.stats.learned_clauses += 1
        if len(lemma) == 1:
            self.assign(lemma[0])
        elif len(lemma) == 2:
            view.add_binary(lemma[0], lemma[1])
            self.assign(lemma[0], lemma[1] ^ 1)
        else:
            clause, fresh = view.add_nary(lemma, learnt=True)
            if fresh:
                view.attach_watches(clause, lemma[0], lemma[1])
            else:
                # already watched by this worker; move the watches onto the
                # asserting pair so the invariant survives later backjumps
                self._rewatch(view.find_thread_clause(clause), lemma[0], lemma[1])
            clause.active[view.worker] = 1
            self.assign(lemma[0], clause)

    def _rewatch(self, tc, a: int, b: int) -> None:
        view = self.view
        if {tc.wl0, tc.wl1} == {a, b}:
            return
        if tc.wl0 not in (a, b) and tc.wl1 not in (a, b):
            view.relink_watch(tc, tc.wl0, a)
            view.relink_watch(tc, tc.wl1, b)
            return
        keep = tc.wl0 if tc.wl0 in (a, b) else tc.wl1
        drop = tc.wl1 if keep == tc.wl0 else tc.wl0
        view.relink_watch(tc, drop, b if keep == a else a)

    # decisions

    def decide(self) -> Optional[int]:
        v = self.vsids.pop_max(self.trail.vals)
        if v is None:
            return None
        return 2 * v + (0 if self.phase[v] else 1)

    def on_conflict_bump(self, variables) -> None:
        self.vsids.bump(variables)

    # cleanup

    def reduce(self) -> int:
        reason = self.trail.reason
        locked = {id(reason[lit >> 1]) for lit in self.trail.stack
                  if isinstance(reason[lit >> 1], NaryClause)}
        w = self.view.worker

        def keep(c: NaryClause) -> bool:
            return len(c.lits) <= 3 or c.active[w] or id(c) in locked

        deleted = self.view.reduce(keep)
        self.stats.deleted_clauses += deleted
        return deleted

    # main loop

    def enqueue_units(self) -> bool:
        """Assign the formula's unit clauses at level 0; False if they clash."""
        if self.formula.has_empty_clause:
            return False
        vals = self.trail.vals
        for c in self.formula.clauses:
            if len(c) == 1:
                v = vals[c[0] >> 1]
                if v == UNDEF:
                    self.assign(c[0])
                elif v ^ (c[0] & 1) == FALSE:
                    return False
        return True

    def _cancelled(self) -> bool:
        return self.cancel is not None and self.cancel.is_set()

    def _unknown(self, started: float) -> SolveResult:
        self.stats.wall_time = time.perf_counter() - started
        reason = getattr(self.cancel, "reason", None) or "cancelled"
        return SolveResult(Status.UNKNOWN, reason=reason, stats=self.stats)

    def solve(self) -> SolveResult:
        started = time.perf_counter()
        stats = self.stats
        cfg = self.config
        trail = self.trail
        self.view.claim()

        if not self.enqueue_units():
            return self._finish(Status.UNSAT, started)

        since_restart = 0
        since_cleanup = 0
        while True:
            conflict = self.bcp()
            if conflict is not None:
                stats.conflicts += 1
                since_restart += 1
                since_cleanup += 1
                if trail.decision_level == 0:
                    return self._finish(Status.UNSAT, started)
                lemma, bj, bumped = self.analyze_conflict(conflict)
                self.backjump(bj)
                self.learn(lemma)
                self.on_conflict_bump(bumped)
                continue

            if cfg.debug_invariants:
                self.invariant_scans += 1
                self.invariant_violations.extend(check_watch_invariant(self.view, trail.vals))
            if since_cleanup >= cfg.cleanup_interval:
                since_cleanup = 0
                self.reduce()
            if since_restart >= luby(stats.restarts + 1) * cfg.luby_unit:
                since_restart = 0
                stats.restarts += 1
                self.backjump(0)
                if self._cancelled():
                    return self._unknown(started)
                continue
            if self._cancelled():
                return self._unknown(started)
            lit = self.decide()
            if lit is None:
                return self._finish(Status.SAT, started)
            stats.decisions += 1
            trail.new_level()
            self.assign(lit)

    def _finish(self, status: Status, started: float) -> SolveResult:
        self.stats.wall_time = time.perf_counter() - started
        model = None
        if status is Status.SAT:
            model = self.trail.model()
            if not verify_model(self.formula.clauses, model):
                raise AssertionError("internal error: model does not satisfy the formula")
        return SolveResult(status, model=model, stats=self.stats)


def solve(formula: Formula, config: Optional[EngineConfig] = None, view: Optional[DbView] = None,
          cancel=None, lemma_hook=None) -> SolveResult:
    """Solve with one worker; builds and loads a private view if none is given."""
    config = config or EngineConfig()
    if view is None:
        view = make_views("none", formula.num_vars, 1)[0]
        load_clauses([view], formula.clauses)
    return Solver(formula, config, view, cancel, lemma_hook).solve()

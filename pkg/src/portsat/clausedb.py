"""Clause storage with three physical sharing strategies.

``SharingMode.NONE``
    every worker owns its binary lists and n-ary clauses.
``SharingMode.BINS``
    binary implication lists are one physical structure used by all workers;
    n-ary clauses stay private.
``SharingMode.ALL``
    binary lists and n-ary clause records are both shared. Workers never write
    watch state into a shared record: each keeps private ``ThreadClause``
    overlays holding its two watched literals and the chain links.

Binary lists live in a slab of fixed-size nodes, each exactly one cache line:
an 8-byte next link, a 4-byte used count and as many 4-byte literals as fit.
"""

from __future__ import annotations

import enum
import threading
from array import array
from typing import Callable, Iterable, Iterator, Optional, Sequence

NODE_LINK_BYTES = 8
NODE_COUNT_BYTES = 4
LITERAL_BYTES = 4
DEFAULT_LINE_SIZE = 64
DEFAULT_MAX_WORKERS = 64


class SharingMode(enum.Enum):
    NONE = "none"
    BINS = "bins"
    ALL = "all"

    @classmethod
    def parse(cls, text: "str | SharingMode") -> "SharingMode":
        if isinstance(text, SharingMode):
            return text
        key = text.lower().replace("_", "-")
        for prefix in ("shared-", "share-"):
            if key.startswith(prefix):
                key = key[len(prefix):]
        aliases = {"none": cls.NONE, "bins": cls.BINS, "bin": cls.BINS,
                   "binary": cls.BINS, "all": cls.ALL}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown sharing mode {text!r}") from None

    @property
    def shares_binaries(self) -> bool:
        return self is not SharingMode.NONE

    @property
    def shares_nary(self) -> bool:
        return self is SharingMode.ALL


def node_capacity(line_size: int) -> int:
    """Literals per binary node for a given cache-line size (13 for 64 bytes)."""
    cap = (line_size - NODE_LINK_BYTES - NODE_COUNT_BYTES) // LITERAL_BYTES
    if line_size % LITERAL_BYTES or cap < 1:
        raise ValueError(f"unusable cache-line size {line_size}")
    return cap


class BinaryStore:
    """Per-literal binary implication lists over a cache-line node slab.

    Node ``k`` (1-based; 0 is the null link) occupies words
    ``[(k-1)*w, k*w)`` of ``slab``: next link low/high word, used count,
    then the literal slots. Writers fill a slot before publishing the new
    used count, and fill a node before linking it, so lock-free readers
    never see a half-written literal.
    """

    def __init__(self, num_vars: int, line_size: int = DEFAULT_LINE_SIZE,
                 locked: bool = False):
        self.line_size = line_size
        self.capacity = node_capacity(line_size)
        self.slab = array("I")
        assert self.slab.itemsize == LITERAL_BYTES
        self.words = line_size // LITERAL_BYTES
        num_lits = 2 * num_vars
        self.first = array("I", bytes(LITERAL_BYTES * num_lits))
        self.last = array("I", bytes(LITERAL_BYTES * num_lits))
        self.locks = [threading.Lock() for _ in range(num_lits)] if locked else None
        self._alloc_lock = threading.Lock()
        self._blank = array("I", bytes(line_size))
        self.num_nodes = 0

    @property
    def node_bytes(self) -> int:
        return self.words * self.slab.itemsize

    def _alloc(self) -> int:
        with self._alloc_lock:
            self.slab.extend(self._blank)
            self.num_nodes += 1
            return self.num_nodes

    def append(self, lit: int, implied: int) -> None:
        """Add ``implied`` to the implication list of ``lit``."""
        locks = self.locks
        if locks is not None:
            locks[lit].acquire()
        try:
            slab, w = self.slab, self.words
            last = self.last[lit]
            if last:
                base = (last - 1) * w
                used = slab[base + 2]
                if used < self.capacity:
                    slab[base + 3 + used] = implied
                    slab[base + 2] = used + 1
                    return
            node = self._alloc()
            base = (node - 1) * w
            slab[base + 3] = implied
            slab[base + 2] = 1
            if last:
                lb = (last - 1) * w
                slab[lb] = node & 0xFFFFFFFF
                slab[lb + 1] = node >> 32
            else:
                self.first[lit] = node
            self.last[lit] = node
        finally:
            if locks is not None:
                locks[lit].release()

    def nodes(self, lit: int) -> Iterator[int]:
        slab, w = self.slab, self.words
        node = self.first[lit]
        while node:
            yield node
            base = (node - 1) * w
            node = slab[base] | (slab[base + 1] << 32)

    def node_literals(self, node: int) -> array:
        base = (node - 1) * self.words
        used = self.slab[base + 2]
        return self.slab[base + 3: base + 3 + used]

    def implications(self, lit: int) -> Iterator[int]:
        slab, w = self.slab, self.words
        node = self.first[lit]
        while node:
            base = (node - 1) * w
            used = slab[base + 2]
            yield from slab[base + 3: base + 3 + used]
            node = slab[base] | (slab[base + 1] << 32)

    def count(self) -> int:
        return sum(len(self.node_literals(n)) for lit in range(len(self.first))
                   for n in self.nodes(lit))


class NaryClause:
    """A clause of three or more literals.

    ``flags`` has bit ``w`` set while worker ``w`` propagates with the
    clause; ``active[w]`` marks participation in a conflict since worker
    ``w``'s last cleanup.
    """

    __slots__ = ("lits", "learnt", "flags", "active")

    def __init__(self, lits: tuple, learnt: bool, max_workers: int):
        self.lits = lits
        self.learnt = learnt
        self.flags = 0
        self.active = bytearray(max_workers)

    def __len__(self) -> int:
        return len(self.lits)

    def __repr__(self) -> str:
        return f"NaryClause({list(self.lits)}, learnt={self.learnt}, flags={self.flags:#x})"


class ThreadClause:
    """One worker's watch overlay for an n-ary clause."""

    __slots__ = ("wl0", "wl1", "nw0", "nw1", "clause")

    def __init__(self, clause: NaryClause, wl0: int, wl1: int):
        self.clause = clause
        self.wl0 = wl0
        self.wl1 = wl1
        self.nw0: Optional[ThreadClause] = None
        self.nw1: Optional[ThreadClause] = None

    def watched(self) -> tuple[int, int]:
        return self.wl0, self.wl1


class NaryStore:
    """Holds n-ary clause records; deduplicating and gated when shared."""

    def __init__(self, max_workers: int = DEFAULT_MAX_WORKERS, shared: bool = False):
        self.max_workers = max_workers
        self.shared = shared
        # insertion-ordered set of live records
        self.records: dict[NaryClause, None] = {}
        self.index: dict[tuple, NaryClause] = {}
        self.gate = threading.Lock() if shared else None

    def __len__(self) -> int:
        return len(self.records)

    def insert(self, lits: Sequence[int], worker_bits: int, learnt: bool) -> tuple[NaryClause, int]:
        """Store ``lits`` for the workers in ``worker_bits``.

        Returns the record and the subset of ``worker_bits`` that was not
        already flagged on it.
        """
        canon = tuple(sorted(lits))
        if not self.shared:
            c = NaryClause(canon, learnt, self.max_workers)
            c.flags = worker_bits
            self.records[c] = None
            return c, worker_bits
        with self.gate:
            c = self.index.get(canon)
            if c is None:
                c = NaryClause(canon, learnt, self.max_workers)
                self.index[canon] = c
                self.records[c] = None
            fresh = worker_bits & ~c.flags
            c.flags |= worker_bits
            return c, fresh

    def release(self, c: NaryClause, worker: int) -> bool:
        """Clear ``worker``'s flag; reclaim the record once unflagged."""
        bit = 1 << worker
        if not self.shared:
            c.flags &= ~bit
            if not c.flags:
                self.records.pop(c, None)
                return True
            return False
        with self.gate:
            c.flags &= ~bit
            if not c.flags:
                self.records.pop(c, None)
                if self.index.get(c.lits) is c:
                    del self.index[c.lits]
                return True
            return False

    def literal_count(self) -> int:
        return sum(len(c.lits) for c in list(self.records))


class OwnershipError(RuntimeError):
    pass


class DbView:
    """A worker's access point to the clause database.

    Watch heads and ThreadClauses are private to the view; ``binaries`` and
    ``nary`` may be shared with other views depending on ``mode``.
    """

    def __init__(self, worker: int, mode: SharingMode, num_vars: int,
                 binaries: BinaryStore, nary: NaryStore, debug: bool = False):
        if worker >= nary.max_workers:
            raise ValueError(f"worker {worker} exceeds flag width {nary.max_workers}")
        self.worker = worker
        self.bit = 1 << worker
        self.mode = mode
        self.num_vars = num_vars
        self.binaries = binaries
        self.nary = nary
        self.watches: list[Optional[ThreadClause]] = [None] * (2 * num_vars)
        self.thread_clauses: list[ThreadClause] = []
        self.debug = debug
        self._owner: Optional[int] = None

    def claim(self) -> None:
        """Tag the calling thread as the owner of the private structures."""
        self._owner = threading.get_ident()

    def _check_owner(self) -> None:
        if self.debug and self._owner is not None and self._owner != threading.get_ident():
            raise OwnershipError(f"view {self.worker} mutated from a foreign thread")

    # binary clauses

    def add_binary(self, l1: int, l2: int) -> None:
        if l1 == l2 or l1 ^ 1 == l2:
            raise ValueError("binary clause needs two distinct, non-complementary literals")
        self.binaries.append(l1 ^ 1, l2)
        self.binaries.append(l2 ^ 1, l1)

    def implications(self, lit: int) -> Iterator[int]:
        return self.binaries.implications(lit)

    # n-ary clauses

    def add_nary(self, lits: Sequence[int], learnt: bool = False) -> tuple[NaryClause, bool]:
        """Insert a clause of length >= 3 for this worker.

        Returns ``(record, fresh)``; ``fresh`` is False when the shared store
        already had the clause flagged for this worker.
        """
        if len(lits) < 3:
            raise ValueError("n-ary clauses have at least three literals")
        c, fresh = self.nary.insert(lits, self.bit, learnt)
        return c, bool(fresh)

    def attach_watches(self, c: NaryClause, wl0: int, wl1: int) -> ThreadClause:
        if wl0 == wl1:
            raise ValueError("watched literals must differ")
        self._check_owner()
        tc = ThreadClause(c, wl0, wl1)
        heads = self.watches
        tc.nw0 = heads[wl0]
        heads[wl0] = tc
        tc.nw1 = heads[wl1]
        heads[wl1] = tc
        self.thread_clauses.append(tc)
        return tc

    def watch_chain(self, lit: int) -> Iterator[ThreadClause]:
        tc = self.watches[lit]
        while tc is not None:
            yield tc
            tc = tc.nw0 if tc.wl0 == lit else tc.nw1

    def _unlink(self, tc: ThreadClause, lit: int) -> None:
        heads = self.watches
        prev = None
        cur = heads[lit]
        while cur is not None and cur is not tc:
            prev = cur
            cur = cur.nw0 if cur.wl0 == lit else cur.nw1
        if cur is None:
            raise ValueError("thread clause not on the watch chain")
        nxt = tc.nw0 if tc.wl0 == lit else tc.nw1
        if prev is None:
            heads[lit] = nxt
        elif prev.wl0 == lit:
            prev.nw0 = nxt
        else:
            prev.nw1 = nxt

    def relink_watch(self, tc: ThreadClause, old: int, new: int) -> None:
        """Move one of ``tc``'s watches from ``old`` to ``new``."""
        self._check_owner()
        if old not in (tc.wl0, tc.wl1):
            raise ValueError(f"literal {old} is not watched")
        if new in (tc.wl0, tc.wl1) or new not in tc.clause.lits:
            raise ValueError(f"literal {new} cannot be watched")
        self._unlink(tc, old)
        heads = self.watches
        if tc.wl0 == old:
            tc.wl0 = new
            tc.nw0 = heads[new]
        else:
            tc.wl1 = new
            tc.nw1 = heads[new]
        heads[new] = tc

    def find_thread_clause(self, c: NaryClause) -> Optional[ThreadClause]:
        for tc in self.thread_clauses:
            if tc.clause is c:
                return tc
        return None

    def reduce(self, keep: Callable[[NaryClause], bool]) -> int:
        """Drop this worker's lemmas failing ``keep``; returns how many.

        Original clauses are always kept. Activity markers of the survivors
        are reset.
        """
        self._check_owner()
        w = self.worker
        survivors = []
        dropped = []
        for tc in self.thread_clauses:
            c = tc.clause
            if not c.learnt or keep(c):
                survivors.append(tc)
                c.active[w] = 0
            else:
                dropped.append(tc)
        if not dropped:
            return 0
        dead = {id(tc) for tc in dropped}
        heads = self.watches
        for lit in range(len(heads)):
            prev = None
            cur = heads[lit]
            while cur is not None:
                nxt = cur.nw0 if cur.wl0 == lit else cur.nw1
                if id(cur) in dead:
                    if prev is None:
                        heads[lit] = nxt
                    elif prev.wl0 == lit:
                        prev.nw0 = nxt
                    else:
                        prev.nw1 = nxt
                else:
                    prev = cur
                cur = nxt
        for tc in dropped:
            self.nary.release(tc.clause, w)
        self.thread_clauses = survivors
        return len(dropped)


def make_views(mode: "SharingMode | str", num_vars: int, workers: int,
               line_size: int = DEFAULT_LINE_SIZE,
               max_workers: int = DEFAULT_MAX_WORKERS,
               debug: bool = False) -> list[DbView]:
    """Create ``workers`` views wired according to ``mode``."""
    mode = SharingMode.parse(mode)
    if not 1 <= workers <= max_workers:
        raise ValueError(f"worker count must be in [1, {max_workers}]")
    shared_bins = BinaryStore(num_vars, line_size, locked=True) if mode.shares_binaries else None
    shared_nary = NaryStore(max_workers, shared=True) if mode.shares_nary else None
    views = []
    for w in range(workers):
        bins = shared_bins if shared_bins is not None else BinaryStore(num_vars, line_size)
        nary = shared_nary if shared_nary is not None else NaryStore(max_workers)
        views.append(DbView(w, mode, num_vars, bins, nary, debug=debug))
    return views


def load_clauses(views: Sequence[DbView], clauses: Iterable[Sequence[int]]) -> list[int]:
    """Load original clauses into every view; returns the unit literals.

    Shared structures are filled once. In ``ALL`` mode each n-ary record is
    inserted once with every worker's flag set. Every worker watches the
    first two literals in the clause's given order.
    """
    views = list(views)
    mode = views[0].mode
    all_bits = 0
    for v in views:
        all_bits |= v.bit
    units = []
    for clause in clauses:
        n = len(clause)
        if n == 1:
            units.append(clause[0])
        elif n == 2:
            targets = views[:1] if mode.shares_binaries else views
            for v in targets:
                v.add_binary(clause[0], clause[1])
        elif mode.shares_nary:
            c, fresh = views[0].nary.insert(clause, all_bits, learnt=False)
            for v in views:
                if fresh & v.bit:
                    v.attach_watches(c, clause[0], clause[1])
        else:
            for v in views:
                c, _ = v.add_nary(clause)
                v.attach_watches(c, clause[0], clause[1])
    return units


def census(views: Sequence[DbView]) -> dict:
    """Count physically distinct storage reachable from ``views``."""
    stores = {id(v.nary): v.nary for v in views}
    bins = {id(v.binaries): v.binaries for v in views}
    records = [c for s in stores.values() for c in list(s.records)]
    originals = sum(1 for c in records if not c.learnt)
    return {
        "nary_records": len(records),
        "original_records": originals,
        "lemma_records": len(records) - originals,
        "nary_literals": sum(len(c.lits) for c in records),
        "binary_nodes": sum(b.num_nodes for b in bins.values()),
        "binary_bytes": sum(b.num_nodes * b.node_bytes for b in bins.values()),
        "thread_clauses": [len(v.thread_clauses) for v in views],
    }

"""Core value types: literals, assignments, trail and solve results.

Literals are plain ``int`` codes, ``2 * (v - 1) + p`` for DIMACS variable
``v`` and polarity ``p`` (0 positive, 1 negated), so they index arrays
directly. Variables are 0-based internally (``code >> 1``).
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence


class IngestError(ValueError):
    """A literal or clause that does not fit the declared problem."""


class LiteralValue(enum.IntEnum):
    FALSE = 0
    TRUE = 1
    UNDEFINED = 2


# Per-variable value codes. A literal's value is ``vals[var] ^ (lit & 1)``
# when the variable is assigned, which yields 0/1; unassigned variables hold
# UNDEF and any result >= UNDEF means undefined.
FALSE = 0
TRUE = 1
UNDEF = 2


def encode_literal(dimacs_int: int, num_vars: Optional[int] = None) -> int:
    if dimacs_int == 0:
        raise IngestError("0 is not a literal")
    v = abs(dimacs_int)
    if num_vars is not None and v > num_vars:
        raise IngestError(f"variable {v} exceeds declared count {num_vars}")
    return 2 * (v - 1) + (1 if dimacs_int < 0 else 0)


def decode_literal(code: int) -> int:
    v = (code >> 1) + 1
    return -v if code & 1 else v


def negate(lit: int) -> int:
    return lit ^ 1


def variable_of(lit: int) -> int:
    """1-based DIMACS variable of a literal code."""
    return (lit >> 1) + 1


def literal_value(vals: Sequence[int], lit: int) -> LiteralValue:
    v = vals[lit >> 1]
    if v >= UNDEF:
        return LiteralValue.UNDEFINED
    return LiteralValue(v ^ (lit & 1))


def verify_model(clauses: Iterable[Sequence[int]], model: Sequence[bool]) -> bool:
    """True iff every clause has a literal made true by ``model``.

    ``model[i]`` is the value of DIMACS variable ``i + 1``; clauses hold
    literal codes.
    """
    for clause in clauses:
        for lit in clause:
            if model[lit >> 1] != bool(lit & 1):
                break
        else:
            return False
    return True


class Trail:
    """Partial assignment with decision levels and reasons.

    A reason is ``None`` for decisions and level-0 facts, an ``int`` literal
    for a binary implication (the true literal whose implication list forced
    the assignment), or a clause record for an n-ary propagation.
    """

    __slots__ = ("stack", "vals", "level", "reason", "level_marks")

    def __init__(self, num_vars: int):
        self.stack: list[int] = []
        self.vals = bytearray([UNDEF]) * num_vars
        self.level = [0] * num_vars
        self.reason: list = [None] * num_vars
        self.level_marks: list[int] = []

    @property
    def decision_level(self) -> int:
        return len(self.level_marks)

    def value(self, lit: int) -> LiteralValue:
        return literal_value(self.vals, lit)

    def new_level(self) -> None:
        self.level_marks.append(len(self.stack))

    def push(self, lit: int, reason=None) -> None:
        var = lit >> 1
        if self.vals[var] != UNDEF:
            raise ValueError(f"variable {var + 1} already assigned")
        self.vals[var] = (lit & 1) ^ 1
        self.level[var] = len(self.level_marks)
        self.reason[var] = reason
        self.stack.append(lit)

    def backjump(self, level: int) -> list[int]:
        """Unassign everything above ``level``; returns the removed literals."""
        if level >= len(self.level_marks):
            return []
        cut = self.level_marks[level]
        removed = self.stack[cut:]
        vals, reason = self.vals, self.reason
        for lit in removed:
            vals[lit >> 1] = UNDEF
            reason[lit >> 1] = None
        del self.stack[cut:]
        del self.level_marks[level:]
        return removed

    def model(self) -> list[bool]:
        # unassigned variables default to positive
        return [v != FALSE for v in self.vals]


class Status(enum.Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    UNKNOWN = "UNKNOWN"


@dataclass
class SolveStats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    learned_clauses: int = 0
    deleted_clauses: int = 0
    wall_time: float = 0.0

    def search_counts(self) -> dict:
        return {
            "conflicts": self.conflicts,
            "decisions": self.decisions,
            "propagations": self.propagations,
            "restarts": self.restarts,
        }

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveResult:
    status: Status
    model: Optional[list[bool]] = None
    # set for UNKNOWN: "timeout", "cancelled" or "failed"
    reason: Optional[str] = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def is_sat(self) -> bool:
        return self.status is Status.SAT

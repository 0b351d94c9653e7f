"""DIMACS CNF reading and SAT-competition result output."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, TextIO, Union

from .model import IngestError, SolveResult, Status, decode_literal, encode_literal

log = logging.getLogger(__name__)

EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_UNKNOWN = 0


class ParseError(IngestError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Formula:
    num_vars: int
    clauses: list[tuple[int, ...]] = field(default_factory=list)
    # an empty clause was read; the formula is trivially unsatisfiable
    has_empty_clause: bool = False

    @property
    def stats(self) -> dict[str, int]:
        counts = {"unit": 0, "binary": 0, "ternary": 0, "nary": 0}
        for c in self.clauses:
            n = len(c)
            key = "unit" if n == 1 else "binary" if n == 2 else "ternary" if n == 3 else "nary"
            counts[key] += 1
        return counts

    def same_clauses(self, other: "Formula") -> bool:
        """Equality up to clause order and literal order within clauses."""
        def key(f):
            return sorted(tuple(sorted(c)) for c in f.clauses)
        return (self.num_vars == other.num_vars
                and self.has_empty_clause == other.has_empty_clause
                and key(self) == key(other))


def _normalize(lits: list[int]) -> tuple[int, ...] | None:
    """Drop duplicate literals; None for a tautology."""
    seen = set()
    out = []
    for lit in lits:
        if lit ^ 1 in seen:
            return None
        if lit not in seen:
            seen.add(lit)
            out.append(lit)
    return tuple(out)


def parse_cnf(source: Union[bytes, str, BinaryIO, TextIO]) -> Formula:
    """Read a DIMACS CNF document.

    Tautologies are dropped and duplicate literals removed. A clause count
    that disagrees with the header only logs a warning.
    """
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)

    formula = None
    declared = 0
    read = 0
    current: list[int] = []
    lineno = 0
    for raw in source:
        lineno += 1
        line = raw.decode("ascii", "replace") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line or line[0] == "c":
            continue
        if line[0] == "%":
            # SATLIB files end with "%\n0"
            break
        if line[0] == "p":
            parts = line.split()
            if formula is not None:
                raise ParseError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError(f"malformed header {line!r}", lineno)
            try:
                nv, declared = int(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(f"malformed header {line!r}", lineno) from None
            if nv < 0 or declared < 0:
                raise ParseError("negative count in header", lineno)
            formula = Formula(nv)
            continue
        if formula is None:
            raise ParseError("clause before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                x = int(tok)
            except ValueError:
                raise ParseError(f"non-integer token {tok!r}", lineno) from None
            if x == 0:
                read += 1
                if not current:
                    formula.has_empty_clause = True
                    continue
                clause = _normalize(current)
                current = []
                if clause is not None:
                    formula.clauses.append(clause)
                continue
            try:
                current.append(encode_literal(x, formula.num_vars))
            except IngestError as e:
                raise ParseError(str(e), lineno) from None

    if formula is None:
        raise ParseError("missing 'p cnf' header", lineno)
    if current:
        raise ParseError("last clause is not terminated by 0", lineno)
    if read != declared:
        log.warning("header declares %d clauses, read %d", declared, read)
    return formula


def write_cnf(formula: Formula, out: TextIO) -> None:
    n_clauses = len(formula.clauses) + (1 if formula.has_empty_clause else 0)
    out.write(f"p cnf {formula.num_vars} {n_clauses}\n")
    for c in formula.clauses:
        out.write(" ".join(str(decode_literal(l)) for l in c))
        out.write(" 0\n")
    if formula.has_empty_clause:
        out.write("0\n")


def format_cnf(formula: Formula) -> str:
    buf = io.StringIO()
    write_cnf(formula, buf)
    return buf.getvalue()


def from_dimacs_clauses(num_vars: int, clauses: Iterable[Iterable[int]]) -> Formula:
    """Build a Formula from signed-integer clauses, with the parser's hygiene."""
    text = io.StringIO()
    clauses = [list(c) for c in clauses]
    text.write(f"p cnf {num_vars} {len(clauses)}\n")
    for c in clauses:
        text.write(" ".join(map(str, c)) + " 0\n")
    text.seek(0)
    return parse_cnf(text)


def emit_result(result: SolveResult, formula: Formula, out: TextIO,
                line_width: int = 78) -> int:
    """Write 's'/'v' lines for ``result``; returns the process exit code."""
    if result.status is Status.SAT:
        out.write("s SATISFIABLE\n")
        model = list(result.model or [])
        model += [True] * (formula.num_vars - len(model))
        tokens = [str(i + 1 if val else -(i + 1)) for i, val in enumerate(model[:formula.num_vars])]
        tokens.append("0")
        line = "v"
        for tok in tokens:
            if len(line) + 1 + len(tok) > line_width and line != "v":
                out.write(line + "\n")
                line = "v"
            line += " " + tok
        out.write(line + "\n")
        return EXIT_SAT
    if result.status is Status.UNSAT:
        out.write("s UNSATISFIABLE\n")
        return EXIT_UNSAT
    out.write("s UNKNOWN\n")
    return EXIT_UNKNOWN

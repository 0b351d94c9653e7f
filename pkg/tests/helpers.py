from portsat.clausedb import load_clauses, make_views
from portsat.dimacs import from_dimacs_clauses
from portsat.engine import EngineConfig, Solver
from portsat.model import decode_literal, encode_literal


def formula(n, clauses):
    return from_dimacs_clauses(n, clauses)


def make_solver(n, clauses, mode="none", config=None, lemma_hook=None):
    f = formula(n, clauses)
    (view,) = make_views(mode, n, 1, debug=True)
    load_clauses([view], f.clauses)
    return Solver(f, config or EngineConfig(), view, lemma_hook=lemma_hook)


def dimacs_set(codes):
    return {decode_literal(c) for c in codes}


def decide(solver, dimacs_lit):
    solver.trail.new_level()
    solver.assign(encode_literal(dimacs_lit))
    return solver.bcp()


def as_dimacs(f):
    return [[decode_literal(l) for l in c] for c in f.clauses]

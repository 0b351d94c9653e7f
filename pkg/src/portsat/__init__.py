"""Portfolio CDCL SAT solver with switchable physical clause sharing."""

from .clausedb import SharingMode
from .dimacs import Formula, emit_result, parse_cnf
from .engine import EngineConfig, Solver, luby, solve
from .model import SolveResult, SolveStats, Status, verify_model
from .portfolio import Portfolio, PortfolioConfig, run_portfolio

__all__ = [
    "EngineConfig", "Formula", "Portfolio", "PortfolioConfig", "SharingMode",
    "SolveResult", "SolveStats", "Solver", "Status", "emit_result", "luby",
    "parse_cnf", "run_portfolio", "solve", "verify_model",
]

"""Distributed solvers for linear equations by projected consensus."""

from .errors import (
    BudgetExceeded,
    ContractViolation,
    DegenerateQuotient,
    FeasibilityDrift,
    InconsistentEquation,
    InsufficientLength,
    RankError,
    ShapeError,
)
from .graphs import Digraph, GraphSchedule
from .sync_engine import Problem, Trace, generate_problem, run_sync, sync_step

__all__ = [
    "BudgetExceeded",
    "ContractViolation",
    "DegenerateQuotient",
    "Digraph",
    "FeasibilityDrift",
    "GraphSchedule",
    "InconsistentEquation",
    "InsufficientLength",
    "Problem",
    "RankError",
    "ShapeError",
    "Trace",
    "generate_problem",
    "run_sync",
    "sync_step",
]

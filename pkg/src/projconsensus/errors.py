"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """A precondition of an operation does not hold."""


class ShapeError(ContractViolation):
    """Array dimensions are incompatible."""


class InconsistentEquation(ValueError):
    """A linear system that was required to be consistent has no solution."""


class RankError(ValueError):
    """A matrix lacks the rank an operation requires."""


class DegenerateQuotient(ValueError):
    """Every projector is the identity, so the quotient space is trivial."""


class InsufficientLength(ValueError):
    """A graph sequence is too short to contain a complete window."""


class FeasibilityDrift(RuntimeError):
    """An agent state no longer satisfies its private equation."""


class BudgetExceeded(RuntimeError):
    """An exhaustive computation would exceed its configured budget."""

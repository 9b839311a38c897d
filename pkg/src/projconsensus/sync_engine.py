"""Synchronous projection-consensus solver for ``Ax = b``."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import sqrt
from typing import Sequence

import numpy as np

from .errors import ContractViolation, FeasibilityDrift, InconsistentEquation, ShapeError
from .graphs import Digraph, GraphSchedule, flocking_matrix
from .linalg import AgentBlock, BlockMatrix, check_stochastic, sandwich, subspace_intersection

FEASIBILITY_TOL = 1e-8
DEFAULT_TOL = 1e-9
DEFAULT_MAX_STEPS = 100_000
DEFAULT_COND = 4.0


@dataclass(frozen=True)
class Problem:
    """A linear system split into per-agent row blocks."""

    agents: tuple[AgentBlock, ...]
    x_star: np.ndarray | None = None
    solvable: bool = True

    @classmethod
    def from_blocks(cls, A_blocks: Sequence, b_blocks: Sequence, x_star=None,
                    strict: bool = True) -> "Problem":
        """Build a problem from row blocks.

        With ``strict`` every agent's own equation must be consistent.
        """
        if len(A_blocks) != len(b_blocks) or not A_blocks:
            raise ContractViolation("need one b block per A block and at least one agent")
        n = np.atleast_2d(np.asarray(A_blocks[0], dtype=float)).shape[1]
        agents = tuple(AgentBlock.from_equation(A, b, n, strict) for A, b in zip(A_blocks, b_blocks))
        A = np.vstack([a.A for a in agents])
        b = np.concatenate([a.b for a in agents])
        x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
        solvable = bool(np.linalg.norm(A @ x_ls - b) <= 1e-9 * (1 + np.linalg.norm(b)))
        if x_star is not None:
            x_star = np.asarray(x_star, dtype=float)
            if x_star.shape != (n,):
                raise ShapeError(f"x_star must have shape ({n},)")
            for i, a in enumerate(agents):
                if a.residual(x_star) > 1e-9 * (1 + np.linalg.norm(a.b)):
                    raise ContractViolation(f"x_star does not solve agent {i}'s equation")
        return cls(agents=agents, x_star=x_star, solvable=solvable)

    @property
    def m(self) -> int:
        return len(self.agents)

    @property
    def n(self) -> int:
        return self.agents[0].n

    @cached_property
    def A(self) -> np.ndarray:
        return np.vstack([a.A for a in self.agents])

    @cached_property
    def b(self) -> np.ndarray:
        return np.concatenate([a.b for a in self.agents])

    @property
    def projectors(self) -> list[np.ndarray]:
        return [a.P for a in self.agents]

    @cached_property
    def P_stack(self) -> np.ndarray:
        return np.stack([a.P for a in self.agents])

    @cached_property
    def _feasibility(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # block-diagonal A, agent index of each stacked row, per-agent thresholds
        owner = np.repeat(np.arange(self.m), [a.A.shape[0] for a in self.agents])
        blockdiag = np.zeros((len(owner), self.m * self.n))
        row = 0
        for i, a in enumerate(self.agents):
            blockdiag[row:row + a.A.shape[0], i * self.n:(i + 1) * self.n] = a.A
            row += a.A.shape[0]
        limits = np.array([FEASIBILITY_TOL * (1 + np.linalg.norm(a.b)) for a in self.agents])
        return blockdiag, owner, limits

    def agent_residuals(self, states: np.ndarray) -> np.ndarray:
        """``|A_i x_i - b_i|`` for every agent."""
        blockdiag, owner, _ = self._feasibility
        r = blockdiag @ states.reshape(-1) - self.b
        return np.sqrt(np.bincount(owner, weights=r * r, minlength=self.m))

    @cached_property
    def unique(self) -> bool:
        return subspace_intersection(self.projectors).dim == 0

    def residual(self, x) -> float:
        r = self.A @ x - self.b
        return sqrt(r @ r)


def generate_problem(m: int, n: int, block_rows: Sequence[int], seed: int,
                     solvable: bool = True, rank: int | None = None,
                     cond: float | None = DEFAULT_COND) -> Problem:
    """Random system with the given row partition.

    ``A = U diag(s) V^T`` with random orthonormal ``U, V`` (QR of Gaussians) and singular
    values uniform in ``[1, cond]``, so the condition number stays at most
    ``cond``. ``cond=None`` draws i.i.d. Gaussian entries instead, which often
    makes the agents' kernels nearly aligned and convergence very slow.
    ``rank`` caps the rank (default: full). When ``solvable`` the right-hand
    side is ``A x*`` for a Gaussian ``x*``; otherwise it is an independent
    Gaussian vector.
    """
    if len(block_rows) != m or any(r < 0 for r in block_rows):
        raise ContractViolation("block_rows must give a nonnegative row count per agent")
    N = int(sum(block_rows))
    r = min(N, n) if rank is None else rank
    if not 0 <= r <= min(N, n):
        raise ContractViolation(f"rank must lie in 0..{min(N, n)}")
    rng = np.random.default_rng(seed)
    if cond is None:
        A = rng.standard_normal((N, r)) @ rng.standard_normal((r, n)) if rank is not None \
            else rng.standard_normal((N, n))
    else:
        if cond < 1:
            raise ContractViolation("cond must be at least 1")
        U = np.linalg.qr(rng.standard_normal((N, r)))[0]
        V = np.linalg.qr(rng.standard_normal((n, r)))[0]
        A = (U * rng.uniform(1.0, cond, r)) @ V.T
    if solvable:
        x_star = rng.standard_normal(n)
        b = A @ x_star
    else:
        x_star = None
        b = rng.standard_normal(N)
    splits = np.cumsum(block_rows)[:-1]
    return Problem.from_blocks(np.split(A, splits), np.split(b, splits), x_star=x_star,
                               strict=solvable)


def init_states(problem: Problem, seed: int) -> np.ndarray:
    """Seeded feasible starting states ``z_i + K_i u_i`` with ``u_i`` uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    states = np.empty((problem.m, problem.n))
    for i, a in enumerate(problem.agents):
        if not a.consistent:
            raise InconsistentEquation(f"agent {i}'s equation has no solution")
        u = rng.uniform(-1.0, 1.0, size=a.K.shape[1])
        states[i] = a.z + a.K @ u
    return states


def check_feasible(states: np.ndarray, problem: Problem) -> None:
    """Raise FeasibilityDrift if some ``|A_i x_i - b_i| > 1e-8 (1 + |b_i|)``."""
    res = problem.agent_residuals(states)
    bad = np.flatnonzero(res > problem._feasibility[2])
    if bad.size:
        i = int(bad[0])
        raise FeasibilityDrift(f"agent {i} residual {res[i]:.3e} exceeds {FEASIBILITY_TOL:g}")


def _as_states(states, problem: Problem) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.shape != (problem.m, problem.n):
        raise ShapeError(f"states must have shape {(problem.m, problem.n)}, got {states.shape}")
    return states


def _project_toward(states: np.ndarray, targets: np.ndarray, problem: Problem) -> np.ndarray:
    # every row depends only on the snapshot, so the agents update independently
    return states - np.einsum("ijk,ik->ij", problem.P_stack, states - targets)


def sync_step(states, G: Digraph, problem: Problem) -> np.ndarray:
    """One round of neighbor averaging projected onto each agent's solution set."""
    states = _as_states(states, problem)
    if G.m != problem.m:
        raise ContractViolation("neighbor graph and problem differ in agent count")
    return _advance(states, G, problem)


def _advance(states: np.ndarray, G: Digraph, problem: Problem) -> np.ndarray:
    F = flocking_matrix(G)
    check_feasible(states, problem)
    return _project_toward(states, F @ states, problem)


def weighted_step(states, G: Digraph, W, problem: Problem) -> np.ndarray:
    """Like :func:`sync_step` with per-neighbor convex weights ``W[i, j]``.

    One scalar weight multiplies the whole of neighbor ``j``'s state.
    """
    states = _as_states(states, problem)
    W = np.asarray(W, dtype=float)
    if W.shape != (problem.m, problem.m):
        raise ShapeError("W must be m x m")
    if G.m != problem.m or not G.has_self_arcs():
        raise ContractViolation("neighbor graph must be a self-arc graph on m vertices")
    if (W[G.adj] <= 0).any():
        raise ContractViolation("weights must be positive on every arc")
    if (W[~G.adj] != 0).any():
        raise ContractViolation("weights must vanish off the arcs of G")
    check_stochastic(W)
    check_feasible(states, problem)
    return _project_toward(states, W @ states, problem)


def error_transition(P_list: Sequence[np.ndarray], F) -> BlockMatrix:
    """Transition ``P (F kron I) P`` of the stacked error ``x_i - x*``."""
    return sandwich(P_list, F)


def disagreement(states: np.ndarray) -> float:
    """Largest pairwise distance between agent states."""
    diffs = (states[:, None, :] - states[None, :, :]).reshape(-1, states.shape[1])
    return sqrt(float(np.einsum("ij,ij->i", diffs, diffs).max()))


@dataclass
class StepRecord:
    t: int
    states: np.ndarray
    disagreement: float
    residual: float
    per_agent_error: np.ndarray | None = None
    error: float | None = None


@dataclass
class Trace:
    steps: list[StepRecord] = field(default_factory=list)
    converged: bool = False
    converged_at: int | None = None
    empirical_rate: float | None = None

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    def max_errors(self) -> np.ndarray:
        return np.array([s.per_agent_error.max() for s in self.steps])


def fit_log_rate(t, err) -> tuple[float | None, float | None]:
    """Least-squares slope and R^2 of ``log(err)`` against ``t``.

    Points with zero error are dropped; fewer than three points gives
    ``(None, None)``.
    """
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = err > 0
    t, y = t[keep], np.log(err[keep])
    if t.size < 3:
        return None, None
    slope, intercept = np.polyfit(t, y, 1)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - (slope * t + intercept)) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def last_half(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    k = len(trace.steps) // 2
    return trace.times()[k:], trace.max_errors()[k:]


def finalize_errors(trace: Trace, reference: np.ndarray) -> None:
    """Fill per-agent errors against ``reference`` and fit the empirical rate."""
    diffs = np.stack([rec.states for rec in trace.steps]) - reference
    errs = np.sqrt(np.einsum("tij,tij->ti", diffs, diffs))
    totals = np.sqrt(np.einsum("ti,ti->t", errs, errs))
    for rec, e, total in zip(trace.steps, errs, totals):
        rec.per_agent_error = e
        rec.error = float(total)
    trace.empirical_rate = fit_log_rate(*last_half(trace))[0]


def _record(t: int, states: np.ndarray, problem: Problem) -> StepRecord:
    return StepRecord(t=t, states=states, disagreement=disagreement(states),
                      residual=problem.residual(states.sum(axis=0) / len(states)))


def error_reference(problem: Problem, final_states: np.ndarray) -> np.ndarray:
    """``x*`` when the solution is unique and known, else the final consensus point."""
    if problem.x_star is not None and problem.unique:
        return problem.x_star
    return final_states.mean(axis=0)


def run_sync(problem: Problem, sched: GraphSchedule, max_steps: int = DEFAULT_MAX_STEPS,
             tol: float = DEFAULT_TOL, seed: int = 0, states=None) -> Trace:
    """Iterate :func:`sync_step` until agents agree on a solution or steps run out.

    Stops at the first ``t`` with disagreement and residual both at most
    ``tol``; ``max_steps`` bounds the number of updates.
    """
    if not problem.solvable:
        raise ContractViolation("run_sync requires a consistent system; see lsq for least squares")
    states = init_states(problem, seed) if states is None else _as_states(states, problem).copy()
    trace = Trace()
    t = 1
    while True:
        rec = _record(t, states, problem)
        trace.steps.append(rec)
        if rec.disagreement <= tol and rec.residual <= tol:
            trace.converged, trace.converged_at = True, t
            break
        if t > max_steps:
            break
        states = _advance(states, sched.at(t), problem)
        t += 1
    finalize_errors(trace, error_reference(problem, states))
    return trace

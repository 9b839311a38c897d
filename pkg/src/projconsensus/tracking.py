"""Tracking the solution of a slowly time-varying square system ``A(t) x = b(t)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation, FeasibilityDrift, RankError, ShapeError
from .graphs import Digraph, GraphSchedule
from .sync_engine import FEASIBILITY_TOL, StepRecord, Trace, disagreement

DEFAULT_DET_FLOOR = 1e-6


@dataclass(frozen=True)
class TimeVaryingProblem:
    """``A(t) = A_base + sin(A_freq (t-1)) A_pert`` and likewise for ``b(t)``.

    Rows are split among agents by ``block_rows``.
    """

    A_base: np.ndarray
    A_pert: np.ndarray
    A_freq: float
    b_base: np.ndarray
    b_pert: np.ndarray
    b_freq: float
    block_rows: tuple[int, ...]
    det_floor: float = DEFAULT_DET_FLOOR

    def __post_init__(self):
        n = self.A_base.shape[0]
        if self.A_base.shape != (n, n) or self.A_pert.shape != (n, n):
            raise ShapeError("A_base and A_pert must be square and equal in shape")
        if self.b_base.shape != (n,) or self.b_pert.shape != (n,):
            raise ShapeError("b_base and b_pert must have one entry per row")
        if sum(self.block_rows) != n or any(r < 1 for r in self.block_rows):
            raise ContractViolation("block_rows must partition the rows into nonempty blocks")

    @classmethod
    def build(cls, A_base, A_pert, A_freq, b_base, b_pert, b_freq,
              block_rows: Sequence[int] | None = None, det_floor: float = DEFAULT_DET_FLOOR):
        A_base = np.asarray(A_base, dtype=float)
        rows = tuple(block_rows) if block_rows is not None else (1,) * A_base.shape[0]
        return cls(A_base, np.asarray(A_pert, dtype=float), float(A_freq),
                   np.asarray(b_base, dtype=float), np.asarray(b_pert, dtype=float),
                   float(b_freq), rows, float(det_floor))

    def scaled(self, amplitude: float) -> "TimeVaryingProblem":
        """Same problem with both perturbation matrices multiplied by ``amplitude``."""
        return TimeVaryingProblem(self.A_base, amplitude * self.A_pert, self.A_freq,
                                  self.b_base, amplitude * self.b_pert, self.b_freq,
                                  self.block_rows, self.det_floor)

    @property
    def m(self) -> int:
        return len(self.block_rows)

    @property
    def n(self) -> int:
        return self.A_base.shape[0]

    def A(self, t: int) -> np.ndarray:
        return self.A_base + np.sin(self.A_freq * (t - 1)) * self.A_pert

    def b(self, t: int) -> np.ndarray:
        return self.b_base + np.sin(self.b_freq * (t - 1)) * self.b_pert

    def blocks(self, t: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-agent ``(A_i(t), b_i(t))``, checked against the determinant floor."""
        A, b = self.A(t), self.b(t)
        out = []
        start = 0
        for i, r in enumerate(self.block_rows):
            Ai, bi = A[start:start + r], b[start:start + r]
            if abs(np.linalg.det(Ai @ Ai.T)) < self.det_floor:
                raise RankError(f"agent {i} at t = {t}: det(A_i A_i^T) below {self.det_floor:g}")
            out.append((Ai, bi))
            start += r
        return out


def sinusoidal_example() -> TimeVaryingProblem:
    """Three agents, one row each, sinusoidally perturbed 3x3 system."""
    return TimeVaryingProblem.build(
        A_base=[[2, 3, 5], [4, 9, -8], [1, 5, 10]],
        A_pert=[[0.1, 0.09, -0.24], [0.2, -0.6, 0.1], [0.03, 0.05, 0.4]],
        A_freq=0.1,
        b_base=[10, 5, 16],
        b_pert=[0.1, 0.2, 0.3],
        b_freq=0.6,
    )


SINUSOIDAL_INITIAL_STATES = np.array([[11.5, -1.0, -2.0], [1.25, 0.0, 0.0], [-9.0, 1.0, 2.0]])


def min_norm_solution(Ai: np.ndarray, bi: np.ndarray) -> np.ndarray:
    """``A_i^T (A_i A_i^T)^{-1} b_i`` for full-row-rank ``A_i``."""
    return Ai.T @ np.linalg.solve(Ai @ Ai.T, bi)


def row_space_projector(Ai: np.ndarray) -> np.ndarray:
    return Ai.T @ np.linalg.solve(Ai @ Ai.T, Ai)


def kernel_projector_full_row_rank(Ai: np.ndarray) -> np.ndarray:
    P = np.eye(Ai.shape[1]) - row_space_projector(Ai)
    return (P + P.T) / 2


def tracking_step(states, G: Digraph, tvp: TimeVaryingProblem, t: int, z=None) -> np.ndarray:
    """Advance from ``x(t)`` to ``x(t+1)`` using the data at ``t + 1``.

    ``z`` optionally supplies each agent's solution of ``A_i(t+1) x = b_i(t+1)``;
    by default the minimum-norm one is used.
    """
    states = np.asarray(states, dtype=float)
    if states.shape != (tvp.m, tvp.n):
        raise ShapeError(f"states must have shape {(tvp.m, tvp.n)}")
    if G.m != tvp.m or not G.has_self_arcs():
        raise ContractViolation("neighbor graph must be a self-arc graph on m vertices")
    out = np.empty_like(states)
    for i, (Ai, bi) in enumerate(tvp.blocks(t + 1)):
        zi = min_norm_solution(Ai, bi) if z is None else np.asarray(z[i], dtype=float)
        nbrs = G.adj[i]
        avg = states[nbrs].sum(axis=0) / np.count_nonzero(nbrs)
        out[i] = zi - kernel_projector_full_row_rank(Ai) @ (zi - avg)
        res = np.linalg.norm(Ai @ out[i] - bi)
        if res > FEASIBILITY_TOL * (1 + np.linalg.norm(bi)):
            raise FeasibilityDrift(f"agent {i} residual {res:.3e} at t = {t + 1}")
    return out


def true_solution(tvp: TimeVaryingProblem, t: int) -> np.ndarray:
    A = tvp.A(t)
    if abs(np.linalg.det(A)) < 1e-300 or np.linalg.cond(A) > 1e14:
        raise RankError(f"A({t}) is singular")
    return np.linalg.solve(A, tvp.b(t))


def tracking_error(states, tvp: TimeVaryingProblem, t: int) -> float:
    """Two-norm of the stacked errors ``x_i(t) - x*(t)``."""
    e = np.asarray(states, dtype=float) - true_solution(tvp, t)
    return float(np.linalg.norm(e))


def solution_drift(tvp: TimeVaryingProblem, t: int) -> np.ndarray:
    """``delta(t)`` with ``x*(t+1) = x*(t) - delta(t)``."""
    A0, A1 = tvp.A(t), tvp.A(t + 1)
    dA = A1 - A0
    db = tvp.b(t + 1) - tvp.b(t)
    return np.linalg.solve(A1, dA @ np.linalg.solve(A0, tvp.b(t)) - db)


def run_tracking(tvp: TimeVaryingProblem, sched: GraphSchedule, horizon: int,
                 states=None) -> Trace:
    """Run ``horizon`` records (``t = 1 .. horizon``) of the tracking iteration."""
    if states is None:
        states = np.array([min_norm_solution(Ai, bi) for Ai, bi in tvp.blocks(1)])
    states = np.asarray(states, dtype=float).copy()
    for i, (Ai, bi) in enumerate(tvp.blocks(1)):
        if np.linalg.norm(Ai @ states[i] - bi) > FEASIBILITY_TOL * (1 + np.linalg.norm(bi)):
            raise FeasibilityDrift(f"initial state of agent {i} violates A_i(1) x = b_i(1)")
    trace = Trace()
    for t in range(1, horizon + 1):
        x_star = true_solution(tvp, t)
        e = np.linalg.norm(states - x_star, axis=1)
        trace.steps.append(StepRecord(
            t=t, states=states, disagreement=disagreement(states),
            residual=float(np.linalg.norm(tvp.A(t) @ states.mean(axis=0) - tvp.b(t))),
            per_agent_error=e, error=float(np.sqrt((e ** 2).sum())),
        ))
        if t < horizon:
            states = tracking_step(states, sched.at(t), tvp, t)
    return trace

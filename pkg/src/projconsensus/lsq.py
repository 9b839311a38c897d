"""Distributed least squares by augmenting agent states along a spanning tree."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation, RankError
from .graphs import GraphSchedule
from .linalg import numerical_rank
from .sync_engine import DEFAULT_MAX_STEPS, DEFAULT_TOL, Problem, Trace, run_sync


@dataclass(frozen=True)
class TreeTopology:
    """An oriented spanning tree; edge ``(u, v)`` points from tail ``u`` to head ``v``."""

    m: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        m = self.m
        if m < 1:
            raise ContractViolation("a tree needs at least one vertex")
        if len(self.edges) != m - 1:
            raise ContractViolation(f"a spanning tree on {m} vertices has {m - 1} edges")
        parent = list(range(m))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for u, v in self.edges:
            if not (0 <= u < m and 0 <= v < m) or u == v:
                raise ContractViolation(f"bad edge {(u, v)}")
            ru, rv = find(u), find(v)
            if ru == rv:
                raise ContractViolation(f"edge {(u, v)} closes a cycle")
            parent[ru] = rv

    @classmethod
    def path(cls, m: int) -> "TreeTopology":
        return cls(m, tuple((k, k + 1) for k in range(m - 1)))

    @classmethod
    def star(cls, m: int, center: int | None = None) -> "TreeTopology":
        c = m - 1 if center is None else center
        return cls(m, tuple((k, c) for k in range(m) if k != c))

    @property
    def H(self) -> np.ndarray:
        return incidence(self.edges, self.m)


def incidence(edges: Sequence[Sequence[int]], m: int | None = None) -> np.ndarray:
    """``m x (m-1)`` incidence matrix: +1 at each edge's tail, -1 at its head."""
    edges = [tuple(int(x) for x in e) for e in edges]
    if m is None:
        m = len(edges) + 1
    TreeTopology(m, tuple(edges))
    H = np.zeros((m, len(edges)))
    for k, (u, v) in enumerate(edges):
        H[u, k] = 1.0
        H[v, k] = -1.0
    return H


def augmented_blocks(problem: Problem, tree: TreeTopology) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Agent ``i`` gets ``[A_i^T A_i | h_i kron I] xbar = A_i^T b_i``."""
    if tree.m != problem.m:
        raise ContractViolation("tree and problem disagree on the number of agents")
    n = problem.n
    H = tree.H
    C, d = [], []
    for i, a in enumerate(problem.agents):
        if numerical_rank(np.linalg.svd(a.A, compute_uv=False)) < n:
            raise RankError(f"agent {i}'s matrix is not full column rank")
        C.append(np.hstack([a.A.T @ a.A, np.kron(H[i], np.eye(n))]))
        d.append(a.A.T @ a.b)
    return C, d


def augmented_system(problem: Problem, tree: TreeTopology) -> tuple[np.ndarray, np.ndarray]:
    C, d = augmented_blocks(problem, tree)
    return np.vstack(C), np.concatenate(d)


def augment(problem: Problem, tree: TreeTopology) -> Problem:
    """The consistent augmented problem in ``n m`` unknowns, with its unique solution."""
    C, d = augmented_blocks(problem, tree)
    xbar = np.linalg.solve(np.vstack(C), np.concatenate(d))
    return Problem.from_blocks(C, d, x_star=xbar)


def normal_equations_oracle(A, b) -> np.ndarray:
    """Solve ``A^T A x = A^T b`` directly."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankError("A is not full column rank")
    return np.linalg.solve(A.T @ A, A.T @ b)


def solve_lsq(problem: Problem, tree: TreeTopology, sched: GraphSchedule,
              max_steps: int = DEFAULT_MAX_STEPS, tol: float = DEFAULT_TOL,
              seed: int = 0) -> tuple[np.ndarray, Trace]:
    """Least-squares solution from a consensus run on the augmented problem.

    Returns the first ``n`` coordinates of the agents' average final state.
    """
    aug = augment(problem, tree)
    trace = run_sync(aug, sched, max_steps=max_steps, tol=tol, seed=seed)
    x_hat = trace.final.states.mean(axis=0)[:problem.n]
    return x_hat, trace


def normal_residual(problem: Problem, x) -> float:
    A, b = problem.A, problem.b
    return float(np.linalg.norm(A.T @ A @ x - A.T @ b))

"""Projectors, kernels, subspaces and block matrices.

All agent indices are zero-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    ContractViolation,
    DegenerateQuotient,
    InconsistentEquation,
    ShapeError,
)

RANK_RTOL = 1e-10
MEMBER_TOL = 1e-9
MAX_REDUNDANCY_AGENTS = 12


def _as_matrix(A, n: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else A.reshape(0, n or 0)
    if A.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got shape {A.shape}")
    if n is not None and A.shape[1] != n:
        raise ShapeError(f"expected {n} columns, got {A.shape[1]}")
    return A


def numerical_rank(s: np.ndarray) -> int:
    """Count singular values above ``RANK_RTOL`` times the largest."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def kernel_basis(A) -> np.ndarray:
    """Orthonormal basis (as columns) of ker A."""
    A = _as_matrix(A)
    n = A.shape[1]
    if n == 0:
        raise ShapeError("matrix has no columns")
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    r = numerical_rank(s)
    return vt[r:].T.copy()


def kernel_projector(A) -> np.ndarray:
    """Orthogonal projector onto ker A, symmetrized."""
    K = kernel_basis(A)
    P = K @ K.T
    return (P + P.T) / 2


def particular_solution(A, b, strict: bool = True) -> np.ndarray:
    """Minimum-norm solution of ``A x = b``.

    Raises InconsistentEquation when the least-squares residual exceeds
    ``1e-9 * (1 + |b|)``, unless ``strict`` is off, in which case the
    minimum-norm least-squares solution is returned.
    """
    A = _as_matrix(A)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != A.shape[0]:
        raise ShapeError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    if A.shape[0] == 0:
        return np.zeros(A.shape[1])
    x = np.linalg.pinv(A, rcond=RANK_RTOL) @ b
    res = np.linalg.norm(A @ x - b)
    if strict and res > 1e-9 * (1 + np.linalg.norm(b)):
        raise InconsistentEquation(f"residual {res:.3e} of least-squares solution")
    return x


@dataclass(frozen=True)
class AgentBlock:
    """One agent's private equation ``A x = b`` with its kernel data."""

    A: np.ndarray
    b: np.ndarray
    P: np.ndarray
    z: np.ndarray
    K: np.ndarray

    @classmethod
    def from_equation(cls, A, b, n: int | None = None, strict: bool = True) -> "AgentBlock":
        A = _as_matrix(A, n)
        b = np.asarray(b, dtype=float).reshape(-1)
        K = kernel_basis(A)
        P = K @ K.T
        P = (P + P.T) / 2
        return cls(A=A, b=b, P=P, z=particular_solution(A, b, strict), K=K)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def residual(self, x) -> float:
        return float(np.linalg.norm(self.A @ x - self.b))

    @property
    def consistent(self) -> bool:
        return self.residual(self.z) <= 1e-9 * (1 + np.linalg.norm(self.b))


@dataclass(frozen=True)
class Subspace:
    """A subspace of R^n held as an orthonormal basis (columns)."""

    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, v, tol: float = MEMBER_TOL) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.basis @ (self.basis.T @ v)) <= tol)


def subspace_intersection(projectors: Sequence[np.ndarray]) -> Subspace:
    """Intersection of the images of the given projectors.

    Computed as the kernel of the stacked ``I - P_i``.
    """
    if len(projectors) == 0:
        raise ContractViolation("intersection over an empty family is undefined")
    n = np.asarray(projectors[0]).shape[0]
    stacked = np.vstack([np.eye(n) - np.asarray(P, dtype=float) for P in projectors])
    return Subspace(kernel_basis(stacked))


def _in_all_images(v: np.ndarray, projectors: Iterable[np.ndarray]) -> bool:
    return all(np.linalg.norm(P @ v - v) <= MEMBER_TOL for P in projectors)


def is_redundant(projectors: Sequence[np.ndarray], V: Iterable[int]) -> bool:
    """True when the agents in ``V`` are implied by the others.

    That is, the intersection of the images outside ``V`` lies inside the
    intersection of the images in ``V``.
    """
    m = len(projectors)
    V = set(V)
    if not V or V >= set(range(m)):
        raise ContractViolation("V must be a nonempty proper subset of the agents")
    if not V <= set(range(m)):
        raise ContractViolation(f"V contains indices outside 0..{m - 1}")
    rest = subspace_intersection([projectors[i] for i in range(m) if i not in V])
    inside = [projectors[i] for i in V]
    return all(_in_all_images(rest.basis[:, k], inside) for k in range(rest.dim))


def is_non_redundant(projectors: Sequence[np.ndarray]) -> bool:
    """True when no nonempty proper subset of agents is redundant."""
    m = len(projectors)
    if m > MAX_REDUNDANCY_AGENTS:
        raise BudgetExceeded(
            f"subset enumeration limited to m <= {MAX_REDUNDANCY_AGENTS}, got {m}"
        )
    for size in range(1, m):
        for V in combinations(range(m), size):
            if is_redundant(projectors, V):
                return False
    return True


def quotient_projectors(projectors: Sequence[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Restrict the projectors to the orthogonal complement of their common image.

    Returns ``(Q, reduced)`` where the rows of ``Q`` are an orthonormal basis
    of that complement and ``reduced[i] = Q P_i Q^T``.
    """
    common = subspace_intersection(projectors)
    n = common.ambient
    if common.dim == 0:
        Q = np.eye(n)
    else:
        Q = kernel_basis(common.basis.T).T
    if Q.shape[0] == 0:
        raise DegenerateQuotient("all projectors are the identity; the run is pure consensus")
    reduced = []
    for P in projectors:
        R = Q @ P @ Q.T
        reduced.append((R + R.T) / 2)
    return Q, reduced


class BlockMatrix:
    """An ``mn x mn`` matrix viewed as an ``m x m`` grid of ``n x n`` blocks."""

    __slots__ = ("data", "m", "n")

    def __init__(self, data, m: int, n: int):
        data = np.asarray(data, dtype=float)
        if data.shape != (m * n, m * n):
            raise ShapeError(f"expected shape {(m * n, m * n)}, got {data.shape}")
        self.data = data
        self.m = m
        self.n = n

    @classmethod
    def from_blocks(cls, blocks) -> "BlockMatrix":
        rows = [[np.asarray(b, dtype=float) for b in row] for row in blocks]
        m = len(rows)
        n = rows[0][0].shape[0]
        for row in rows:
            if len(row) != m or any(b.shape != (n, n) for b in row):
                raise ShapeError("blocks must form a square grid of equal square blocks")
        return cls(np.block(rows), m, n)

    @classmethod
    def block_diagonal(cls, blocks: Sequence[np.ndarray]) -> "BlockMatrix":
        m = len(blocks)
        n = np.asarray(blocks[0]).shape[0]
        out = np.zeros((m * n, m * n))
        for i, B in enumerate(blocks):
            B = np.asarray(B, dtype=float)
            if B.shape != (n, n):
                raise ShapeError("diagonal blocks must share one square shape")
            out[i * n:(i + 1) * n, i * n:(i + 1) * n] = B
        return cls(out, m, n)

    def block(self, i: int, j: int) -> np.ndarray:
        n = self.n
        return self.data[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def grid(self) -> np.ndarray:
        """View with shape ``(m, m, n, n)``; ``grid()[i, j]`` is block ``(i, j)``."""
        return self.data.reshape(self.m, self.n, self.m, self.n).transpose(0, 2, 1, 3)

    def block_norms(self) -> np.ndarray:
        """The ``m x m`` matrix of blockwise spectral norms."""
        return np.linalg.norm(self.grid(), ord=2, axis=(-2, -1))

    def __matmul__(self, other: "BlockMatrix") -> "BlockMatrix":
        if (self.m, self.n) != (other.m, other.n):
            raise ShapeError("block structures differ")
        return BlockMatrix(self.data @ other.data, self.m, self.n)

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        if (self.m, self.n) != (other.m, other.n):
            raise ShapeError("block structures differ")
        return BlockMatrix(self.data + other.data, self.m, self.n)

    def __mul__(self, c: float) -> "BlockMatrix":
        return BlockMatrix(self.data * c, self.m, self.n)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"BlockMatrix(m={self.m}, n={self.n})"


def mixed_norm(Q: BlockMatrix) -> float:
    """Infinity norm of the matrix of blockwise spectral norms."""
    return float(Q.block_norms().sum(axis=1).max())


def kron_lift(S, n: int) -> BlockMatrix:
    S = np.asarray(S, dtype=float)
    return BlockMatrix(np.kron(S, np.eye(n)), S.shape[0], n)


def check_stochastic(S, tol: float = 1e-12) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractViolation(f"stochastic matrix must be square, got {S.shape}")
    if (S < -tol).any() or np.abs(S.sum(axis=1) - 1).max() > tol:
        raise ContractViolation("matrix is not row-stochastic")
    return S


def sandwich(P_list: Sequence[np.ndarray], S) -> BlockMatrix:
    """``P (S kron I) P`` with ``P = diag(P_1, ..., P_m)``."""
    S = check_stochastic(S)
    m = len(P_list)
    if S.shape[0] != m:
        raise ShapeError(f"S is {S.shape[0]}x{S.shape[0]} but there are {m} projectors")
    Pd = BlockMatrix.block_diagonal(P_list)
    n = Pd.n
    return BlockMatrix(Pd.data @ np.kron(S, np.eye(n)) @ Pd.data, m, n)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projconsensus.errors import (
    BudgetExceeded,
    ContractViolation,
    DegenerateQuotient,
    InconsistentEquation,
    ShapeError,
)
from projconsensus.linalg import (
    AgentBlock,
    BlockMatrix,
    is_non_redundant,
    is_redundant,
    kernel_basis,
    kernel_projector,
    kron_lift,
    mixed_norm,
    particular_solution,
    quotient_projectors,
    sandwich,
    subspace_intersection,
)


def line_projector(theta):
    u = np.array([np.cos(theta), np.sin(theta)])
    return np.outer(u, u)


def normal_form_projector(A):
    # independent oracle for full-row-rank A
    return np.eye(A.shape[1]) - A.T @ np.linalg.solve(A @ A.T, A)


class TestKernelProjector:
    def test_zero_row_gives_identity(self):
        assert np.allclose(kernel_projector(np.zeros((1, 2))), np.eye(2))

    def test_identity_gives_zero(self):
        assert np.allclose(kernel_projector(np.eye(2)), np.zeros((2, 2)))

    def test_ones_row(self):
        assert np.allclose(kernel_projector([[1.0, 1.0]]), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-14)

    def test_no_rows_means_no_constraint(self):
        assert np.allclose(kernel_projector(np.zeros((0, 3))), np.eye(3))

    def test_rank_deficient_rows(self):
        A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        P = kernel_projector(A)
        assert np.isclose(np.trace(P), 2.0)
        assert np.allclose(A @ P, 0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31))
    def test_invariants_on_random_matrices(self, r, n, seed):
        A = np.random.default_rng(seed).standard_normal((r, n))
        P = kernel_projector(A)
        assert np.abs(P - P.T).max() <= 1e-12
        assert np.abs(P @ P - P).max() <= 1e-10
        assert np.abs(A @ P).max() <= 1e-10 * (1 + np.abs(A).max())
        if r <= n:
            assert np.allclose(P, normal_form_projector(A), atol=1e-9)

    def test_shape_error_on_3d(self):
        with pytest.raises(ShapeError):
            kernel_projector(np.zeros((2, 2, 2)))


class TestKernelBasis:
    def test_identity_has_empty_basis(self):
        assert kernel_basis(np.eye(3)).shape == (3, 0)

    def test_zero_row_gives_full_basis(self):
        assert kernel_basis(np.zeros((1, 2))).shape == (2, 2)

    def test_ones_row(self):
        K = kernel_basis([[1.0, 1.0]])
        assert K.shape == (2, 1)
        assert np.isclose(abs(K[:, 0] @ np.array([1, -1]) / np.sqrt(2)), 1.0)


class TestParticularSolution:
    def test_identity(self):
        assert np.allclose(particular_solution(np.eye(2), [3, 4]), [3, 4])

    def test_min_norm(self):
        assert np.allclose(particular_solution([[1.0, 1.0]], [2.0]), [1.0, 1.0])

    def test_contradictory_rows(self):
        with pytest.raises(InconsistentEquation):
            particular_solution([[1.0, 0.0], [1.0, 0.0]], [1.0, 2.0])

    def test_non_strict_returns_least_squares(self):
        x = particular_solution([[1.0, 0.0], [1.0, 0.0]], [1.0, 2.0], strict=False)
        assert np.allclose(x, [1.5, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            particular_solution(np.eye(2), [1.0])


class TestAgentBlock:
    def test_fields_are_consistent(self):
        a = AgentBlock.from_equation([[1.0, 2.0, 0.0]], [4.0])
        assert np.allclose(a.A @ a.z, a.b)
        assert np.allclose(a.A @ a.P, 0)
        assert a.K.shape == (3, 2)
        assert a.consistent

    def test_column_mismatch(self):
        with pytest.raises(ShapeError):
            AgentBlock.from_equation([[1.0, 2.0]], [1.0], n=3)


class TestSubspaceIntersection:
    def test_orthogonal_axes(self):
        assert subspace_intersection([np.diag([0.0, 1.0]), np.diag([1.0, 0.0])]).dim == 0

    def test_single_projector(self):
        P = line_projector(0.3)
        S = subspace_intersection([P])
        assert S.dim == 1
        assert np.allclose(S.projector(), P)

    def test_nested(self):
        S = subspace_intersection([np.diag([1.0, 0, 0]), np.diag([1.0, 1, 0])])
        assert S.dim == 1
        assert S.contains([1.0, 0, 0])
        assert not S.contains([0.0, 1, 0])

    def test_basis_is_orthonormal(self):
        P = np.diag([1.0, 1, 1, 0])
        S = subspace_intersection([P, P])
        assert np.allclose(S.basis.T @ S.basis, np.eye(3), atol=1e-10)

    def test_empty_family(self):
        with pytest.raises(ContractViolation):
            subspace_intersection([])


class TestRedundancy:
    def test_duplicate_agent_is_redundant(self):
        Ps = [np.diag([0.0, 1]), np.diag([1.0, 0]), np.diag([0.0, 1])]
        assert is_redundant(Ps, {2})

    def test_orthogonal_axes_not_redundant(self):
        assert not is_redundant([np.diag([0.0, 1]), np.diag([1.0, 0])], {1})

    def test_trivial_complement_is_redundant_for_any_v(self):
        Ps = [np.diag([0.0, 1, 0]), np.diag([1.0, 0, 0]), np.diag([1.0, 1, 0])]
        # agents 0 and 1 alone already intersect trivially
        assert is_redundant(Ps, {2})

    def test_bad_subsets(self):
        Ps = [np.eye(2), np.eye(2)]
        with pytest.raises(ContractViolation):
            is_redundant(Ps, set())
        with pytest.raises(ContractViolation):
            is_redundant(Ps, {0, 1})

    def test_non_redundant_lines(self):
        Ps = [line_projector(0.0), line_projector(np.pi / 3)]
        assert is_non_redundant(Ps)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            is_non_redundant([np.eye(2)] * 13)


class TestQuotientProjectors:
    def test_common_axis(self):
        P = np.diag([1.0, 0.0])
        Q, reduced = quotient_projectors([P, P])
        assert np.allclose(np.abs(Q), [[0.0, 1.0]])
        assert all(np.allclose(R, [[0.0]]) for R in reduced)

    def test_trivial_intersection_keeps_singular_values(self):
        Ps = [line_projector(0.0), line_projector(1.0)]
        Q, reduced = quotient_projectors(Ps)
        assert np.allclose(Q @ Q.T, np.eye(2))
        for P, R in zip(Ps, reduced):
            assert np.allclose(np.linalg.svd(P, compute_uv=False), np.linalg.svd(R, compute_uv=False))

    def test_all_identity(self):
        with pytest.raises(DegenerateQuotient):
            quotient_projectors([np.eye(3), np.eye(3)])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_commutation_and_trivial_intersection(self, seed):
        rng = np.random.default_rng(seed)
        common = rng.standard_normal(4)
        # every kernel contains `common`, so the intersection is at least 1-d
        Ps = []
        for _ in range(3):
            A = rng.standard_normal((2, 4))
            A -= np.outer(A @ common, common) / (common @ common)
            Ps.append(kernel_projector(A))
        Q, reduced = quotient_projectors(Ps)
        for P, R in zip(Ps, reduced):
            assert np.allclose(Q @ P, R @ Q, atol=1e-10)
            assert np.allclose(R @ R, R, atol=1e-10)
        assert subspace_intersection(reduced).dim == 0


class TestBlockMatrixAndNorm:
    def test_identity_norm(self):
        assert mixed_norm(BlockMatrix(np.eye(6), 3, 2)) == pytest.approx(1.0)

    def test_zero_norm(self):
        assert mixed_norm(BlockMatrix(np.zeros((4, 4)), 2, 2)) == 0.0

    def test_row_sums(self):
        I = np.eye(2)
        Q = BlockMatrix.from_blocks([[2 * I, 3 * I], [0 * I, I]])
        assert mixed_norm(Q) == pytest.approx(5.0)

    def test_block_access(self):
        data = np.arange(16.0).reshape(4, 4)
        Q = BlockMatrix(data, 2, 2)
        assert np.array_equal(Q.block(1, 0), [[8, 9], [12, 13]])
        assert np.array_equal(Q.grid()[1, 0], Q.block(1, 0))

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            BlockMatrix(np.eye(5), 2, 2)
        with pytest.raises(ShapeError):
            BlockMatrix(np.eye(4), 2, 2) @ BlockMatrix(np.eye(4), 4, 1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31))
    def test_norm_axioms(self, m, n, seed):
        rng = np.random.default_rng(seed)
        A = BlockMatrix(rng.standard_normal((m * n, m * n)), m, n)
        B = BlockMatrix(rng.standard_normal((m * n, m * n)), m, n)
        c = rng.uniform(-3, 3)
        assert mixed_norm(A) > 0
        assert mixed_norm(c * A) == pytest.approx(abs(c) * mixed_norm(A))
        assert mixed_norm(A + B) <= mixed_norm(A) + mixed_norm(B) + 1e-9
        assert mixed_norm(A @ B) <= mixed_norm(A) * mixed_norm(B) + 1e-9


class TestKronAndSandwich:
    def test_kron_identity(self):
        assert np.allclose(kron_lift(np.eye(3), 2).data, np.eye(6))

    def test_kron_n1(self):
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.array_equal(kron_lift(S, 1).data, S)

    def test_kron_half(self):
        B = kron_lift(np.full((2, 2), 0.5), 2)
        for i in range(2):
            for j in range(2):
                assert np.allclose(B.block(i, j), 0.5 * np.eye(2))

    def test_sandwich_identity_projectors(self):
        S = np.array([[0.5, 0.5], [0.25, 0.75]])
        assert np.allclose(sandwich([np.eye(2)] * 2, S).data, np.kron(S, np.eye(2)))

    def test_sandwich_zero_projectors(self):
        assert np.allclose(sandwich([np.zeros((2, 2))] * 2, np.full((2, 2), 0.5)).data, 0)

    def test_sandwich_axes(self):
        P1, P2 = np.diag([0.0, 1.0]), np.diag([1.0, 0.0])
        B = sandwich([P1, P2], np.full((2, 2), 0.5))
        assert np.allclose(B.block(0, 1), 0) and np.allclose(B.block(1, 0), 0)
        assert np.allclose(B.block(0, 0), 0.5 * P1) and np.allclose(B.block(1, 1), 0.5 * P2)

    def test_blockwise_formula(self):
        rng = np.random.default_rng(5)
        Ps = [kernel_projector(rng.standard_normal((1, 3))) for _ in range(3)]
        S = rng.uniform(0.1, 1, (3, 3))
        S /= S.sum(axis=1, keepdims=True)
        B = sandwich(Ps, S)
        for i in range(3):
            for j in range(3):
                assert np.allclose(B.block(i, j), S[i, j] * Ps[i] @ Ps[j])

    def test_non_stochastic(self):
        with pytest.raises(ContractViolation):
            sandwich([np.eye(2)] * 2, np.ones((2, 2)))


class TestProductNorms:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 2**31), st.booleans())
    def test_product_norm_dichotomy(self, n, k, seed, share):
        rng = np.random.default_rng(seed)
        common = rng.standard_normal(n)
        Ps = []
        for _ in range(k):
            A = rng.standard_normal((rng.integers(1, n + 1), n))
            if share:
                A -= np.outer(A @ common, common) / (common @ common)
            Ps.append(kernel_projector(A))
        prod = np.linalg.multi_dot(Ps) if k > 1 else Ps[0]
        norm = np.linalg.norm(prod, 2)
        assert norm <= 1 + 1e-12
        trivial = subspace_intersection(Ps).dim == 0
        if trivial:
            assert norm < 1 - 1e-12
        else:
            assert abs(norm - 1) <= 1e-10

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projconsensus.errors import ContractViolation, FeasibilityDrift, InconsistentEquation
from projconsensus.graphs import Digraph, GraphSchedule, flocking_matrix
from projconsensus.linalg import mixed_norm, subspace_intersection
from projconsensus.sync_engine import (
    Problem,
    disagreement,
    error_transition,
    fit_log_rate,
    generate_problem,
    init_states,
    run_sync,
    sync_step,
    weighted_step,
)


@pytest.fixture
def axes_problem():
    return Problem.from_blocks([[[1.0, 0.0]], [[0.0, 1.0]]], [[1.0], [2.0]], x_star=[1.0, 2.0])


class TestProblem:
    def test_stacking(self, axes_problem):
        assert axes_problem.m == 2 and axes_problem.n == 2
        assert np.array_equal(axes_problem.A, np.eye(2))
        assert axes_problem.solvable and axes_problem.unique

    def test_wrong_x_star(self):
        with pytest.raises(ContractViolation):
            Problem.from_blocks([[[1.0, 0.0]]], [[1.0]], x_star=[0.0, 0.0])

    def test_inconsistent_stack_is_flagged(self):
        p = Problem.from_blocks([[[1.0]], [[1.0]]], [[0.0], [2.0]])
        assert not p.solvable

    def test_generator_shapes(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=0)
        assert [a.A.shape for a in p.agents] == [(2, 4), (1, 4), (1, 4)]
        assert np.linalg.matrix_rank(p.A) == 4
        assert np.allclose(p.A @ p.x_star, p.b)

    def test_generator_rank_and_condition(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=0, rank=3)
        assert np.linalg.matrix_rank(p.A) == 3
        q = generate_problem(3, 4, [2, 1, 1], seed=0, cond=2.0)
        s = np.linalg.svd(q.A, compute_uv=False)
        assert s[0] / s[-1] <= 2.0 + 1e-9

    def test_generator_is_seeded(self):
        a = generate_problem(3, 3, [3, 3, 3], seed=4, solvable=False)
        b = generate_problem(3, 3, [3, 3, 3], seed=4, solvable=False)
        assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


class TestInitStates:
    def test_identity_blocks(self):
        p = Problem.from_blocks([np.eye(2), np.eye(2)], [[1.0, 2.0], [1.0, 2.0]])
        assert np.allclose(init_states(p, 0), [[1, 2], [1, 2]])
        assert np.allclose(init_states(p, 99), [[1, 2], [1, 2]])

    def test_first_coordinate_fixed(self):
        p = Problem.from_blocks([[[1.0, 0.0]]], [[1.0]])
        x = init_states(p, 3)
        assert x[0, 0] == pytest.approx(1.0)
        assert -1 <= x[0, 1] <= 1

    def test_seeded(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=1)
        assert np.array_equal(init_states(p, 5), init_states(p, 5))
        assert not np.array_equal(init_states(p, 5), init_states(p, 6))

    def test_inconsistent_agent(self):
        p = Problem.from_blocks([[[1.0], [1.0]]], [[0.0, 1.0]], strict=False)
        with pytest.raises(InconsistentEquation):
            init_states(p, 0)


class TestSyncStep:
    def test_worked_example(self, axes_problem):
        out = sync_step([[1.0, 0.0], [0.0, 2.0]], Digraph.complete(2), axes_problem)
        assert np.allclose(out, [[1.0, 1.0], [0.5, 2.0]])

    def test_consensus_fixed_point(self, axes_problem):
        x = np.array([[1.0, 2.0], [1.0, 2.0]])
        assert np.array_equal(sync_step(x, Digraph.complete(2), axes_problem), x)

    def test_single_agent(self):
        p = Problem.from_blocks([[[1.0, 1.0]]], [[2.0]])
        x = np.array([[3.0, -1.0]])
        assert np.allclose(sync_step(x, Digraph.self_loops(1), p), x)

    def test_drift_detected(self, axes_problem):
        with pytest.raises(FeasibilityDrift):
            sync_step([[0.0, 0.0], [0.0, 2.0]], Digraph.complete(2), axes_problem)

    def test_snapshot_semantics(self):
        # each agent reads the old states, not updates made earlier in the round
        p = generate_problem(4, 3, [1, 1, 1, 1], seed=2)
        x = init_states(p, 0)
        G = Digraph.ring(4)
        out = sync_step(x, G, p)
        F = flocking_matrix(G)
        for i, a in enumerate(p.agents):
            assert np.allclose(out[i], x[i] - a.P @ (x[i] - F[i] @ x), atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31))
    def test_feasibility_and_error_dynamics(self, seed):
        p = generate_problem(3, 4, [2, 1, 1], seed=seed)
        sched = GraphSchedule.seeded_random(3, seed=seed, l=2)
        x = init_states(p, seed)
        for t in range(1, 15):
            G = sched.at(t)
            nxt = sync_step(x, G, p)
            e_next = error_transition(p.projectors, flocking_matrix(G)).data @ (x - p.x_star).ravel()
            assert np.allclose(nxt - p.x_star, e_next.reshape(3, 4), atol=1e-10)
            assert (p.agent_residuals(nxt) <= 1e-8 * (1 + np.array([np.linalg.norm(a.b) for a in p.agents]))).all()
            assert mixed_norm(error_transition(p.projectors, flocking_matrix(G))) <= 1 + 1e-9
            x = nxt


class TestWeightedStep:
    def test_flocking_weights_match(self, axes_problem):
        x = [[1.0, 0.0], [0.0, 2.0]]
        G = Digraph.complete(2)
        assert np.allclose(weighted_step(x, G, flocking_matrix(G), axes_problem),
                           sync_step(x, G, axes_problem))

    def test_identity_weights(self, axes_problem):
        x = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert np.allclose(weighted_step(x, Digraph.self_loops(2), np.eye(2), axes_problem), x)

    def test_worked_example(self, axes_problem):
        W = [[0.75, 0.25], [0.25, 0.75]]
        out = weighted_step([[1.0, 0.0], [0.0, 2.0]], Digraph.complete(2), W, axes_problem)
        assert np.allclose(out[0], [1.0, 0.5])

    def test_rejections(self, axes_problem):
        x = [[1.0, 0.0], [0.0, 2.0]]
        with pytest.raises(ContractViolation):
            weighted_step(x, Digraph.complete(2), [[0.5, 0.6], [0.5, 0.5]], axes_problem)
        with pytest.raises(ContractViolation):
            weighted_step(x, Digraph.self_loops(2), [[0.5, 0.5], [0.5, 0.5]], axes_problem)
        with pytest.raises(ContractViolation):
            weighted_step(x, Digraph.complete(2), [[1.0, 0.0], [0.5, 0.5]], axes_problem)


class TestErrorTransition:
    def test_identity_projectors(self):
        F = flocking_matrix(Digraph.complete(2))
        assert np.allclose(error_transition([np.eye(2)] * 2, F).data, np.kron(F, np.eye(2)))

    def test_worked_example(self, axes_problem):
        T = error_transition(axes_problem.projectors, flocking_matrix(Digraph.complete(2)))
        assert np.allclose(T.data @ [0.0, -2.0, -1.0, 0.0], [0.0, -1.0, -0.5, 0.0])

    def test_identity_flocking(self, axes_problem):
        T = error_transition(axes_problem.projectors, np.eye(2))
        assert np.allclose(T.data, np.diag([0.0, 1.0, 1.0, 0.0]))


class TestMetrics:
    def test_disagreement(self):
        x = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])
        assert disagreement(x) == pytest.approx(5.0)

    def test_fit_log_rate(self):
        t = np.arange(1, 21)
        slope, r2 = fit_log_rate(t, 3.0 * 0.5 ** t)
        assert slope == pytest.approx(np.log(0.5))
        assert r2 == pytest.approx(1.0)
        assert fit_log_rate([1, 2], [1.0, 0.5]) == (None, None)
        assert fit_log_rate([1, 2, 3, 4], [1.0, 0.0, 0.0, 0.0]) == (None, None)


class TestRunSync:
    def test_complete_graph_unique(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=10)
        tr = run_sync(p, GraphSchedule.fixed(Digraph.complete(3)), max_steps=10000, tol=1e-9)
        assert tr.converged
        assert tr.final.residual <= 1e-9
        assert tr.empirical_rate < 0
        assert np.allclose(tr.final.states, p.x_star, atol=1e-8)

    def test_split_graph_does_not_converge(self):
        rng = np.random.default_rng(0)
        p = Problem.from_blocks([rng.standard_normal((1, 4)) for _ in range(4)],
                                [rng.standard_normal(1) for _ in range(4)])
        G = Digraph.from_arcs(4, [(0, 1), (1, 0), (2, 3), (3, 2)])
        tr = run_sync(p, GraphSchedule.fixed(G), max_steps=500)
        assert not tr.converged
        assert len(tr.steps) == 501

    def test_single_agent_converges_at_once(self):
        p = Problem.from_blocks([np.eye(2)], [[1.0, 2.0]])
        tr = run_sync(p, GraphSchedule.fixed(Digraph.self_loops(1)))
        assert tr.converged and tr.converged_at == 1

    def test_unconstrained_consensus(self):
        p = Problem.from_blocks([np.zeros((1, 2))] * 3, [[0.0]] * 3)
        x0 = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        tr = run_sync(p, GraphSchedule.seeded_random(3, seed=0, l=2), states=x0, max_steps=5000)
        assert tr.converged
        # averaging keeps the limit inside the hull of the initial states
        assert (tr.final.states.min(axis=0) >= x0.min(axis=0) - 1e-12).all()

    def test_non_unique_limit(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=3, rank=3)
        assert not p.unique
        tr = run_sync(p, GraphSchedule.seeded_random(3, seed=1, l=3), max_steps=10000)
        xf = tr.final.states.mean(axis=0)
        assert tr.converged
        assert np.linalg.norm(p.A @ xf - p.b) <= 1e-8
        diff = xf - np.linalg.pinv(p.A) @ p.b
        assert subspace_intersection(p.projectors).contains(diff, tol=1e-8)

    def test_stationary_iff_consensus_solution(self):
        p = generate_problem(3, 3, [1, 1, 1], seed=8)
        G = Digraph.ring(3)
        x_sol = np.tile(p.x_star, (3, 1))
        assert np.allclose(sync_step(x_sol, G, p), x_sol, atol=1e-14)
        x = init_states(p, 1)
        assert not np.allclose(sync_step(x, G, p), x)

    def test_rejects_inconsistent(self):
        p = generate_problem(3, 3, [3, 3, 3], seed=0, solvable=False)
        with pytest.raises(ContractViolation):
            run_sync(p, GraphSchedule.fixed(Digraph.complete(3)))

    def test_step_budget(self):
        p = generate_problem(3, 4, [2, 1, 1], seed=10)
        tr = run_sync(p, GraphSchedule.fixed(Digraph.ring(3)), max_steps=3)
        assert [s.t for s in tr.steps] == [1, 2, 3, 4]

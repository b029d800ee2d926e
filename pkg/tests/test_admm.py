import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfgadmm.admm import (AdmmConfig, Solver, WorkerState, augmented_lagrangian_grad,
                          consensus_residual, dual_update, head_primal_step, make_chain_workers,
                          run, run_iteration, tail_primal_step)
from lfgadmm.data import BatchSampler, Dataset, make_samplers, split_even, synth_regression
from lfgadmm.errors import SchedulingError, StateCorruptionError, UsageError
from lfgadmm.model import (Activation, LayerSpec, MiniBatch, forward_loss, grad, init_params,
                           linear_spec, mlp_spec, param_counts)
from lfgadmm.schedule import CommSchedule, chain_exchange_log, due_layers
from lfgadmm.topology import ChainOrder, Group

from conftest import finite_diff_grad, random_mlp


def lone_worker(params, group=Group.HEAD, left=None, right=None):
    """Worker with explicitly chosen neighbour state (None = absent side)."""
    return WorkerState(0, 0, group, [p.copy() for p in params],
                       left_id=1 if left else None, right_id=2 if right else None,
                       dual_left=left[0] if left else None, cache_left=left[1] if left else None,
                       dual_right=right[0] if right else None, cache_right=right[1] if right else None)


def local_lagrangian(spec, worker, params, batch, rho):
    """Direct evaluation of the worker's local augmented Lagrangian terms."""
    total = forward_loss(spec, params, batch)
    for i, theta in enumerate(params):
        if worker.cache_left is not None:
            r = worker.cache_left[i] - theta
            total += worker.dual_left[i] @ r + rho / 2 * r @ r
        if worker.cache_right is not None:
            r = theta - worker.cache_right[i]
            total += worker.dual_right[i] @ r + rho / 2 * r @ r
    return total


class TestAugmentedLagrangianGrad:
    def test_consensus_reduces_to_model_gradient(self, rng):
        spec, params, batch = random_mlp(rng)
        side = ([np.zeros_like(p) for p in params], [p.copy() for p in params])
        w = lone_worker(params, left=side, right=([z.copy() for z in side[0]], [p.copy() for p in params]))
        g = augmented_lagrangian_grad(w, batch, 0.7, spec)
        for a, b in zip(g, grad(spec, params, batch)):
            assert np.array_equal(a, b)

    def test_pure_penalty_example(self):
        spec = linear_spec(1)
        theta = np.array([1.0, 0.0])
        batch = MiniBatch(np.zeros((1, 1)), np.zeros(1))
        # w=1 with x=0 and b=0 gives zero prediction error, hence zero model gradient
        cache = [np.zeros(2)]
        w = lone_worker([theta], left=([np.zeros(2)], cache), right=([np.zeros(2)], [np.zeros(2)]))
        g = augmented_lagrangian_grad(w, batch, 0.5, spec)
        assert g[0].tolist() == [1.0, 0.0]

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), left=st.booleans(), right=st.booleans())
    def test_matches_finite_differences(self, seed, left, right):
        rng = np.random.default_rng(seed)
        spec, params, batch = random_mlp(rng, classifier=bool(seed % 2))
        if len(spec) > 1:
            spec = [LayerSpec(l.input_dim, l.output_dim,
                              Activation.IDENTITY if l.activation is Activation.RELU else l.activation)
                    for l in spec]
            # identity hidden layers keep the loss smooth for the FD stencil
            params = [p * 0.5 for p in params]

        def side():
            return [rng.normal(size=p.size) for p in params], [rng.normal(size=p.size) for p in params]

        w = lone_worker(params, left=side() if left else None, right=side() if right else None)
        rho = float(rng.uniform(0.1, 2.0))
        analytic = augmented_lagrangian_grad(w, batch, rho, spec)
        fd = finite_diff_grad(lambda p: local_lagrangian(spec, w, p, batch, rho), params)
        for a, b in zip(analytic, fd):
            err = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
            assert np.all(err < 1e-4)

    def test_shape_mismatch_is_state_corruption(self):
        params = [np.zeros(3)]
        w = lone_worker(params, left=([np.zeros(4)], [np.zeros(3)]))
        with pytest.raises(StateCorruptionError):
            augmented_lagrangian_grad(w, MiniBatch(np.zeros((1, 2)), np.zeros(1)), 1.0, linear_spec(2))


class TestPrimalSteps:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.spec = linear_spec(3)
        self.params = [rng.normal(size=4)]
        self.batch = MiniBatch(rng.normal(size=(6, 3)), rng.normal(size=6))
        self.side = ([rng.normal(size=4)], [rng.normal(size=4)])

    def test_zero_learning_rate(self):
        w = lone_worker(self.params, right=self.side)
        head_primal_step(w, self.batch, AdmmConfig(learning_rate=0.0), self.spec)
        assert np.array_equal(w.params[0], self.params[0])
        t = lone_worker(self.params, Group.TAIL, left=self.side)
        tail_primal_step(t, self.batch, AdmmConfig(learning_rate=0.0), self.spec)
        assert np.array_equal(t.params[0], self.params[0])

    def test_single_explicit_step(self):
        w = lone_worker(self.params, right=self.side)
        g = augmented_lagrangian_grad(w.copy(), self.batch, 1.0, self.spec)
        head_primal_step(w, self.batch, AdmmConfig(learning_rate=0.1), self.spec)
        assert np.array_equal(w.params[0], self.params[0] - 0.1 * g[0])
        # duals and caches untouched
        assert np.array_equal(w.dual_right[0], self.side[0][0])
        assert np.array_equal(w.cache_right[0], self.side[1][0])

    @pytest.mark.parametrize("sides", ["left", "right", "both"])
    def test_exact_argmin_matches_stacked_least_squares(self, sides):
        rho = 0.8
        left = self.side if sides in ("left", "both") else None
        right = ([v * -1 for v in self.side[0]], [v + 1 for v in self.side[1]]) if sides in ("right", "both") else None
        w = lone_worker(self.params, left=left, right=right)
        head_primal_step(w, self.batch, AdmmConfig(rho=rho, solver=Solver.EXACT), self.spec)
        # oracle: the local objective is a sum of squares, solve it as one lstsq
        m = self.batch.inputs.shape[0]
        a = np.hstack([self.batch.inputs, np.ones((m, 1))]) / np.sqrt(m)
        rows, targets = [a], [self.batch.labels / np.sqrt(m)]
        s = np.sqrt(rho / 2)
        if left:
            rows.append(s * np.eye(4))
            targets.append(s * (left[1][0] + left[0][0] / rho))
        if right:
            rows.append(s * np.eye(4))
            targets.append(s * (right[1][0] - right[0][0] / rho))
        expected, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(targets), rcond=None)
        assert np.allclose(w.params[0], expected, rtol=1e-10, atol=1e-12)
        g = augmented_lagrangian_grad(w, self.batch, rho, self.spec)
        assert np.linalg.norm(g[0]) < 1e-10

    def test_exact_solver_rejects_mlp(self):
        spec = mlp_spec((3, 2, 2))
        w = lone_worker(init_params(spec, 0))
        with pytest.raises(UsageError):
            head_primal_step(w, MiniBatch(np.zeros((1, 3)), [0]), AdmmConfig(solver="exact"), spec)

    def test_wrong_group(self):
        w = lone_worker(self.params, Group.TAIL)
        with pytest.raises(UsageError):
            head_primal_step(w, self.batch, AdmmConfig(), self.spec)
        with pytest.raises(UsageError):
            tail_primal_step(lone_worker(self.params), self.batch, AdmmConfig(), self.spec)

    def test_mirrored_two_worker_steps(self):
        # mirrored data and states: head at +theta with target y, tail at -theta with -y;
        # both ends hold the same edge dual
        rng = np.random.default_rng(8)
        x, y = rng.normal(size=(5, 3)), rng.normal(size=5)
        theta, lam = rng.normal(size=4), rng.normal(size=4)
        head = WorkerState(0, 0, Group.HEAD, [theta.copy()], right_id=1,
                           dual_right=[lam.copy()], cache_right=[-theta])
        tail = WorkerState(1, 1, Group.TAIL, [-theta], left_id=0,
                           dual_left=[lam.copy()], cache_left=[theta.copy()])
        cfg = AdmmConfig(rho=0.6, learning_rate=0.05, inner_steps=3)
        head_primal_step(head, MiniBatch(x, y), cfg, self.spec)
        tail_primal_step(tail, MiniBatch(x, -y), cfg, self.spec)
        assert np.allclose(head.params[0], -tail.params[0], rtol=0, atol=1e-15)


class TestDualUpdate:
    def test_zero_residual(self):
        w = lone_worker([np.ones(2)], right=([np.full(2, 3.0)], [np.ones(2)]))
        dual_update(w, 0, 0.5)
        assert w.dual_right[0].tolist() == [3.0, 3.0]

    def test_arithmetic_example(self):
        w = lone_worker([np.array([2.0, 0.0])], right=([np.zeros(2)], [np.zeros(2)]))
        dual_update(w, 0, 0.5)
        assert w.dual_right[0].tolist() == [1.0, 0.0]

    def test_left_sign(self):
        w = lone_worker([np.array([2.0, 0.0])], left=([np.zeros(2)], [np.zeros(2)]))
        dual_update(w, 0, 0.5)
        assert w.dual_left[0].tolist() == [-1.0, 0.0]

    def test_strict_mode_rejects_off_schedule(self):
        sched = CommSchedule(5, 2, 0, 3, 100)
        w = lone_worker([np.zeros(2)] * 3, right=([np.zeros(2)] * 3, [np.zeros(2)] * 3))
        dual_update(w, 1, 1.0, k=5, schedule=sched)
        with pytest.raises(SchedulingError):
            dual_update(w, 0, 1.0, k=5, schedule=sched)
        with pytest.raises(SchedulingError):
            dual_update(w, 1, 1.0, k=7, schedule=sched)


class TestDueLayers:
    SCHED = CommSchedule(base_period=5, beta=2, largest_layer=0, n_layers=6, total_iterations=500)

    def test_examples(self):
        # the six layers are 0-based here; the largest is layer 0
        assert due_layers(5, self.SCHED) == [1, 2, 3, 4, 5]
        assert due_layers(10, self.SCHED) == [0, 1, 2, 3, 4, 5]
        assert due_layers(7, self.SCHED) == []
        uniform = CommSchedule(5, 1, 0, 6, 500)
        assert all(due_layers(k, uniform) == list(range(6)) for k in range(5, 501, 5))

    def test_k_must_be_positive(self):
        with pytest.raises(Exception):
            due_layers(0, self.SCHED)

    def test_largest_layer_from_counts(self):
        assert CommSchedule.for_model(param_counts(mlp_spec()), 5, 2, 500).largest_layer == 0
        assert CommSchedule.for_model([3, 9, 9, 1], 5, 2, 500).largest_layer == 1

    @settings(max_examples=40, deadline=None)
    @given(T=st.integers(1, 12), beta=st.integers(1, 5), K=st.integers(1, 300), L=st.integers(1, 6))
    def test_transmission_counts(self, T, beta, K, L):
        sched = CommSchedule(T, beta, 0, L, K)
        counts = [sum(layer in due_layers(k, sched) for k in range(1, K + 1)) for layer in range(L)]
        assert counts == [K // sched.period(layer) for layer in range(L)]


def convex_setup(n_workers=4, beta=1, period=1, seed=0, n=400, dim=5, noise=0.1):
    ds, _ = synth_regression(n, dim, noise, seed)
    parts = split_even(ds, n_workers)
    spec = linear_spec(dim)
    chain = ChainOrder.from_order(range(n_workers))
    workers = make_chain_workers(chain, init_params(spec, seed, "zeros"))
    samplers = {i: BatchSampler(p, len(p), seed) for i, p in enumerate(parts)}
    sched = CommSchedule.for_model(param_counts(spec), period, beta, 500)
    return ds, spec, workers, samplers, sched


class TestRunIteration:
    def test_no_exchange_off_period(self):
        _, spec, workers, samplers, _ = convex_setup()
        sched = CommSchedule(5, 1, 0, 1, 500)
        assert len(run_iteration(workers, 3, sched, AdmmConfig(), samplers, spec)) == 0

    def test_n4_exchange_count(self):
        spec = mlp_spec((4, 3, 3, 2))
        rng = np.random.default_rng(0)
        parts = [Dataset(rng.normal(size=(10, 4)), rng.integers(0, 2, 10)) for _ in range(4)]
        workers = make_chain_workers(ChainOrder.from_order([2, 0, 3, 1]), init_params(spec, 0))
        samplers = make_samplers(parts, 5, 0)
        sched = CommSchedule.for_model(param_counts(spec), 5, 1, 500)
        log = run_iteration(workers, 5, sched, AdmmConfig(), samplers, spec)
        assert len(log) == len(spec) * 6
        pairs = {(r.sender_id, r.receiver_id) for r in log}
        assert pairs == {(2, 0), (0, 2), (0, 3), (3, 0), (3, 1), (1, 3)}

    def test_rejects_non_chain_order(self):
        _, spec, workers, samplers, sched = convex_setup()
        with pytest.raises(StateCorruptionError):
            run_iteration(workers[::-1], 1, sched, AdmmConfig(), samplers, spec)

    def test_log_matches_independent_enumeration(self):
        spec = mlp_spec((3, 4, 2))
        rng = np.random.default_rng(1)
        parts = [Dataset(rng.normal(size=(8, 3)), rng.integers(0, 2, 8)) for _ in range(5)]
        order = [4, 1, 0, 3, 2]
        workers = make_chain_workers(ChainOrder.from_order(order), init_params(spec, 0))
        sched = CommSchedule.for_model(param_counts(spec), 2, 3, 40)
        log = run(workers, sched, AdmmConfig(), make_samplers(parts, 4, 0), spec)
        assert log == chain_exchange_log(order, sched, param_counts(spec))

    def test_convex_convergence_and_residual(self):
        ds, spec, workers, samplers, sched = convex_setup()
        cfg = AdmmConfig(rho=1.0, solver=Solver.EXACT)
        x = np.hstack([ds.inputs, np.ones((len(ds), 1))])
        target = np.linalg.solve(x.T @ x, x.T @ ds.labels)
        for k in range(1, 501):
            run_iteration(workers, k, sched, cfg, samplers, spec)
            if consensus_residual(workers) < 1e-9:
                break
        assert consensus_residual(workers) < 1e-6
        mean = np.mean([w.params[0] for w in workers], axis=0)
        assert np.linalg.norm(mean - target) / np.linalg.norm(target) < 1e-4

    def test_beta_one_equals_uniform_schedule(self):
        class Uniform:
            def __init__(self, period, n_layers):
                self.periods = (period,) * n_layers

        results = []
        for sched in (CommSchedule(3, 1, 0, 3, 30), Uniform(3, 3)):
            spec = mlp_spec((4, 3, 3, 2))
            rng = np.random.default_rng(2)
            parts = [Dataset(rng.normal(size=(9, 4)), rng.integers(0, 2, 9)) for _ in range(3)]
            workers = make_chain_workers(ChainOrder.from_order(range(3)), init_params(spec, 1))
            samplers = make_samplers(parts, 3, 4)
            for k in range(1, 31):
                run_iteration(workers, k, sched, AdmmConfig(learning_rate=0.1), samplers, spec)
            results.append([p for w in workers for p in w.params])
        assert all(np.array_equal(a, b) for a, b in zip(*results))

    def test_threaded_matches_sequential(self):
        from concurrent.futures import ThreadPoolExecutor
        finals = []
        for pool in (None, ThreadPoolExecutor(3)):
            _, spec, workers, samplers, sched = convex_setup(n_workers=6, period=2, seed=4, n=420)
            cfg = AdmmConfig(rho=0.5, learning_rate=0.05, inner_steps=2)
            for k in range(1, 41):
                run_iteration(workers, k, sched, cfg, samplers, spec, pool)
            finals.append([w.params[0] for w in workers])
            if pool:
                pool.shutdown()
        assert all(np.array_equal(a, b) for a, b in zip(*finals))

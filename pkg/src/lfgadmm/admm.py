"""Layer-wise federated group ADMM over a chain of workers.

Workers sit on a chain and alternate between the head and tail groups.
Each iteration ``k`` every head takes a primal step on its local augmented
Lagrangian, heads then push their due layers to both tail neighbours, tails
take their primal step against those fresh values, tails push back, and
finally every worker updates the duals of the layers that were exchanged.
Layer ``l`` is due when ``k`` is a multiple of its period; between exchanges
neighbour caches and duals stay frozen.

Worker ``n`` keeps its own copy of the dual on each side: ``dual_left`` is
the multiplier of the constraint with its left neighbour, ``dual_right``
the one with its right neighbour.  Both ends of an edge apply the identical
update to identical operands, so the two copies never drift apart.
"""
from __future__ import annotations

import enum
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (ConfigurationError, SchedulingError, StateCorruptionError, UsageError)
from .model import Activation, LayerSpec, MiniBatch, loss_and_grad
from .schedule import ExchangeLog, due_layers
from .topology import ChainOrder, Group


class Solver(str, enum.Enum):
    SGD = "sgd"
    EXACT = "exact"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    learning_rate: float = 0.01
    inner_steps: int = 1
    seed: int = 0
    solver: Solver = Solver.SGD

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError("rho must be positive")
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if self.inner_steps < 1:
            raise ConfigurationError("inner_steps must be at least 1")
        object.__setattr__(self, "solver", Solver(self.solver))


@dataclass
class WorkerState:
    id: int
    position: int
    group: Group
    params: list[np.ndarray]
    left_id: int | None = None
    right_id: int | None = None
    dual_left: list[np.ndarray] | None = None
    dual_right: list[np.ndarray] | None = None
    cache_left: list[np.ndarray] | None = None
    cache_right: list[np.ndarray] | None = None
    last_loss: float = field(default=float("nan"), compare=False)

    def copy(self) -> "WorkerState":
        def dup(vs):
            return None if vs is None else [v.copy() for v in vs]

        return WorkerState(self.id, self.position, self.group, dup(self.params), self.left_id,
                           self.right_id, dup(self.dual_left), dup(self.dual_right),
                           dup(self.cache_left), dup(self.cache_right), self.last_loss)


def make_chain_workers(chain: ChainOrder, params: Sequence[np.ndarray],
                       cache_init: str = "zeros") -> list[WorkerState]:
    """Workers in chain order, all starting from ``params``.

    Duals start at zero.  Neighbour caches start at zero (``cache_init="zeros"``)
    or at the shared initial parameters (``"params"``), which is what every
    neighbour actually holds before the first exchange.
    """
    n = len(chain.order)
    zeros = [np.zeros_like(p, dtype=float) for p in params]
    if cache_init not in ("zeros", "params"):
        raise ConfigurationError(f"unknown cache_init {cache_init!r}")
    start = zeros if cache_init == "zeros" else [np.array(p, dtype=float) for p in params]
    workers = []
    for pos, wid in enumerate(chain.order):
        left = chain.order[pos - 1] if pos > 0 else None
        right = chain.order[pos + 1] if pos + 1 < n else None
        workers.append(WorkerState(
            id=wid, position=pos, group=chain.groups[wid],
            params=[np.array(p, dtype=float) for p in params],
            left_id=left, right_id=right,
            dual_left=[z.copy() for z in zeros] if left is not None else None,
            dual_right=[z.copy() for z in zeros] if right is not None else None,
            cache_left=[c.copy() for c in start] if left is not None else None,
            cache_right=[c.copy() for c in start] if right is not None else None,
        ))
    return workers


def _check_side(worker: WorkerState, vectors, name):
    if vectors is None:
        return
    if len(vectors) != len(worker.params) or any(
            v.shape != p.shape for v, p in zip(vectors, worker.params)):
        raise StateCorruptionError(f"worker {worker.id}: {name} does not match the parameter layout")


def penalty_grad(worker: WorkerState, rho: float) -> list[np.ndarray]:
    """Gradient of the dual and quadratic-penalty terms with respect to the worker's layers."""
    for name in ("dual_left", "dual_right", "cache_left", "cache_right"):
        _check_side(worker, getattr(worker, name), name)
    out = []
    for i, theta in enumerate(worker.params):
        g = np.zeros_like(theta)
        if worker.cache_left is not None:
            g -= worker.dual_left[i]
            g += rho * (theta - worker.cache_left[i])
        if worker.cache_right is not None:
            g += worker.dual_right[i]
            g += rho * (theta - worker.cache_right[i])
        out.append(g)
    return out


def augmented_lagrangian_grad(worker: WorkerState, batch: MiniBatch, rho: float,
                              spec: Sequence[LayerSpec]) -> list[np.ndarray]:
    """Model gradient plus the neighbour coupling terms, per layer."""
    loss, g = loss_and_grad(spec, worker.params, batch)
    worker.last_loss = loss
    return [a + b for a, b in zip(g, penalty_grad(worker, rho))]


def _exact_argmin(worker: WorkerState, batch: MiniBatch, rho: float,
                  spec: Sequence[LayerSpec]) -> None:
    """Closed-form minimiser of the local augmented Lagrangian for a linear least-squares model."""
    if len(spec) != 1 or spec[0].activation is not Activation.IDENTITY:
        raise UsageError("exact solver needs a single identity layer with squared loss")
    layer = spec[0]
    x = np.asarray(batch.inputs, dtype=float)
    m = x.shape[0]
    a = np.hstack([x, np.ones((m, 1))])
    y = np.asarray(batch.labels, dtype=float).reshape(m, layer.output_dim)
    sides = (worker.cache_left is not None) + (worker.cache_right is not None)
    # weights are stored row-major then biases, i.e. the rows of [W; b]
    penalty_rhs = np.zeros(layer.n_params)
    if worker.cache_left is not None:
        penalty_rhs = penalty_rhs + worker.dual_left[0] + rho * worker.cache_left[0]
    if worker.cache_right is not None:
        penalty_rhs = penalty_rhs - worker.dual_right[0] + rho * worker.cache_right[0]
    rhs = (2.0 / m) * (a.T @ y) + penalty_rhs.reshape(layer.input_dim + 1, layer.output_dim)
    lhs = (2.0 / m) * (a.T @ a) + sides * rho * np.eye(layer.input_dim + 1)
    worker.params[0] = np.linalg.solve(lhs, rhs).ravel()


def _primal_step(worker: WorkerState, batch: MiniBatch, config: AdmmConfig,
                 spec: Sequence[LayerSpec]) -> WorkerState:
    if config.solver is Solver.EXACT:
        _exact_argmin(worker, batch, config.rho, spec)
        return worker
    for _ in range(config.inner_steps):
        g = augmented_lagrangian_grad(worker, batch, config.rho, spec)
        worker.params = [p - config.learning_rate * d for p, d in zip(worker.params, g)]
    return worker


def head_primal_step(worker: WorkerState, batch: MiniBatch, config: AdmmConfig,
                     spec: Sequence[LayerSpec]) -> WorkerState:
    if worker.group is not Group.HEAD:
        raise UsageError(f"worker {worker.id} is not a head")
    return _primal_step(worker, batch, config, spec)


def tail_primal_step(worker: WorkerState, batch: MiniBatch, config: AdmmConfig,
                     spec: Sequence[LayerSpec]) -> WorkerState:
    if worker.group is not Group.TAIL:
        raise UsageError(f"worker {worker.id} is not a tail")
    return _primal_step(worker, batch, config, spec)


def dual_update(worker: WorkerState, layer: int, rho: float, *, k: int | None = None,
                schedule=None) -> WorkerState:
    """Dual ascent on both of the worker's edges for one layer.

    Passing ``k`` and ``schedule`` enables the strict check that the layer is
    actually due at ``k``.
    """
    if k is not None and schedule is not None and layer not in due_layers(k, schedule):
        raise SchedulingError(f"layer {layer} is not exchanged at iteration {k}")
    theta = worker.params[layer]
    if worker.cache_right is not None:
        worker.dual_right[layer] = worker.dual_right[layer] + rho * (theta - worker.cache_right[layer])
    if worker.cache_left is not None:
        worker.dual_left[layer] = worker.dual_left[layer] + rho * (worker.cache_left[layer] - theta)
    return worker


def _transmit(sender: WorkerState, workers: Sequence[WorkerState], layers, k, log: ExchangeLog):
    for nb_pos in (sender.position - 1, sender.position + 1):
        if not 0 <= nb_pos < len(workers):
            continue
        receiver = workers[nb_pos]
        cache = receiver.cache_right if nb_pos < sender.position else receiver.cache_left
        for layer in layers:
            cache[layer] = sender.params[layer].copy()
            log.add(k, sender.id, receiver.id, layer, sender.params[layer].size)


def _map(pool: Executor | None, fn, items):
    if pool is None:
        return [fn(w) for w in items]
    return list(pool.map(fn, items))


def run_iteration(workers: Sequence[WorkerState], k: int, schedule, config: AdmmConfig,
                  samplers: Mapping[int, object], spec: Sequence[LayerSpec],
                  pool: Executor | None = None) -> ExchangeLog:
    """Advance every worker by one iteration; returns the transmissions made.

    ``workers`` must be in chain order.  ``samplers`` maps worker id to an
    object with ``next() -> MiniBatch``.  With ``pool`` the workers of one
    group step concurrently; results are identical to sequential execution.
    """
    for pos, w in enumerate(workers):
        if w.position != pos or w.group is not (Group.HEAD if pos % 2 == 0 else Group.TAIL):
            raise StateCorruptionError("workers are not an alternating chain in chain order")
    log = ExchangeLog()
    due = due_layers(k, schedule)
    heads = workers[0::2]
    tails = workers[1::2]

    _map(pool, lambda w: head_primal_step(w, samplers[w.id].next(), config, spec), heads)
    if due:
        for w in heads:
            _transmit(w, workers, due, k, log)
    _map(pool, lambda w: tail_primal_step(w, samplers[w.id].next(), config, spec), tails)
    if due:
        for w in tails:
            _transmit(w, workers, due, k, log)
        for w in workers:
            for layer in due:
                dual_update(w, layer, config.rho)
    return log


def consensus_residual(workers: Sequence[WorkerState]) -> float:
    """Largest L2 distance between any two workers' full parameter vectors."""
    flat = [np.concatenate(w.params) for w in workers]
    best = 0.0
    for i in range(len(flat)):
        for j in range(i + 1, len(flat)):
            best = max(best, float(np.linalg.norm(flat[i] - flat[j])))
    return best


def run(workers: Sequence[WorkerState], schedule, config: AdmmConfig, samplers,
        spec: Sequence[LayerSpec], *, pool: Executor | None = None,
        callback: Callable[[int, Sequence[WorkerState], ExchangeLog], None] | None = None,
        ) -> ExchangeLog:
    """Run iterations ``1..schedule.total_iterations`` and return the full exchange log."""
    log = ExchangeLog()
    for k in range(1, schedule.total_iterations + 1):
        step_log = run_iteration(workers, k, schedule, config, samplers, spec, pool)
        log.extend(step_log)
        if callback is not None:
            callback(k, workers, step_log)
    return log

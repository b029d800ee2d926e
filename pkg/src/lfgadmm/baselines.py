"""Server-aided federated averaging and single-worker SGD baselines."""
from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, UsageError
from .model import LayerSpec, loss_and_grad
from .schedule import ExchangeLog

# Layer index written to the exchange log for a full-model payload.
FULL_MODEL = -1


@dataclass(frozen=True)
class FlConfig:
    local_steps: int = 5
    learning_rate: float = 0.01
    server_id: int = 0
    inner_steps: int = 1

    def __post_init__(self):
        if self.local_steps < 1 or self.inner_steps < 1:
            raise ConfigurationError("local_steps and inner_steps must be at least 1")
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning_rate must be non-negative")


@dataclass
class FlWorker:
    id: int
    params: list[np.ndarray]
    last_loss: float = field(default=float("nan"), compare=False)


def sgd_step(spec: Sequence[LayerSpec], params, batch, learning_rate: float, inner_steps: int = 1):
    """``inner_steps`` gradient steps on one mini-batch; returns the loss seen by the first."""
    first = None
    for _ in range(inner_steps):
        loss, g = loss_and_grad(spec, params, batch)
        params = [p - learning_rate * d for p, d in zip(params, g)]
        first = loss if first is None else first
    return params, first


def fl_average(workers: Sequence[FlWorker], server_id: int, iteration: int = 0) -> ExchangeLog:
    """Upload every model to ``server_id``, average, and broadcast the mean back.

    The server is itself a worker, so it neither uploads to nor downloads
    from itself.
    """
    ids = [w.id for w in workers]
    if server_id not in ids:
        raise UsageError(f"server {server_id} is not one of the workers {ids}")
    log = ExchangeLog()
    size = sum(p.size for p in workers[0].params)
    for w in workers:
        if w.id != server_id:
            log.add(iteration, w.id, server_id, FULL_MODEL, size)
    n_layers = len(workers[0].params)
    # mean of the offsets from the first model, so that identical models
    # average to themselves exactly
    ref = workers[0].params
    mean = [ref[i] + np.mean([w.params[i] - ref[i] for w in workers], axis=0)
            for i in range(n_layers)]
    for w in workers:
        w.params = [m.copy() for m in mean]
        if w.id != server_id:
            log.add(iteration, server_id, w.id, FULL_MODEL, size)
    return log


def _local_steps(worker: FlWorker, sampler, spec, config: FlConfig) -> FlWorker:
    for _ in range(config.local_steps):
        worker.params, worker.last_loss = sgd_step(spec, worker.params, sampler.next(),
                                                   config.learning_rate, config.inner_steps)
    if not all(np.all(np.isfinite(p)) for p in worker.params):
        raise DivergenceError(f"FL worker {worker.id} produced non-finite parameters")
    return worker


def fl_round(workers: Sequence[FlWorker], server_id: int, config: FlConfig,
             samplers: Mapping[int, object], spec: Sequence[LayerSpec], iteration: int = 0,
             pool: Executor | None = None) -> ExchangeLog:
    """``local_steps`` SGD steps on every worker followed by one averaging exchange."""
    fn = lambda w: _local_steps(w, samplers[w.id], spec, config)  # noqa: E731
    if pool is None:
        for w in workers:
            fn(w)
    else:
        list(pool.map(fn, workers))
    return fl_average(workers, server_id, iteration)


@dataclass
class StandaloneResult:
    params: list[np.ndarray]
    losses: list[float]          # batch loss recorded at the end of every round
    round_period: int = 5
    total_energy: float = 0.0


def standalone_run(params, sampler, spec: Sequence[LayerSpec], learning_rate: float,
                   total_iterations: int, round_period: int = 5, callback=None,
                   inner_steps: int = 1) -> StandaloneResult:
    """Plain mini-batch SGD on one worker; every ``round_period`` iterations count as a round."""
    params = [np.array(p, dtype=float) for p in params]
    losses = []
    for k in range(1, total_iterations + 1):
        params, loss = sgd_step(spec, params, sampler.next(), learning_rate, inner_steps)
        if not np.isfinite(loss):
            raise DivergenceError(f"standalone loss became {loss} at iteration {k}")
        if k % round_period == 0:
            losses.append(loss)
            if callback is not None:
                callback(k, params)
    return StandaloneResult(params, losses, round_period)

"""Configuration-driven experiment runner.

An :class:`ExperimentConfig` fixes every random seed explicitly, so a run is
a pure function of its config.  Outputs (``metrics.csv``,
``exchange_log.csv``, ``summary.json``, ``topology.json``) are written when
``output_dir`` is set.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from .admm import AdmmConfig, consensus_residual, make_chain_workers, run_iteration
from .baselines import FlConfig, FlWorker, fl_round, sgd_step
from .data import (Dataset, PartitionSpec, load_mnist, make_samplers, partition_iid,
                   synth_regression)
from .errors import AlignmentError, ConfigurationError, DivergenceError
from .model import accuracy, forward_loss, init_params, is_classifier, linear_spec, mlp_spec
from .netcost import ChannelModel, aggregate_run_cost
from .schedule import CommSchedule, ExchangeLog
from .topology import fl_server, min_path_order, place_workers

SCHEMA_VERSION = 1
SCHEMES = ("lfgadmm", "fl", "standalone")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "mnist"              # "mnist" or "synthetic"
    data_dir: str | None = None
    per_worker: int = 500
    batch_size: int = 100
    test_subset: int | None = None
    # synthetic regression only
    feature_dim: int = 10
    noise_std: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "lfgadmm"
    label: str = ""
    beta: int = 1
    base_period: int = 5
    rho: float = 1.0
    learning_rate: float = 0.01
    inner_steps: int = 1
    solver: str = "sgd"
    n_workers: int = 4
    area_side: float = 50.0
    total_iterations: int = 500
    topology_seed: int = 0
    data_seed: int = 0
    init_seed: int = 0
    batch_seed: int = 0
    init_scheme: str = "small_uniform"
    cache_init: str = "zeros"
    hidden_dims: tuple[int, ...] = (256, 128, 64, 32, 16)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    threads: int = 1
    trace: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_workers < 2 and self.scheme != "standalone":
            raise ConfigurationError("decentralized and FL schemes need at least two workers")
        if self.base_period < 1 or self.total_iterations < 1 or self.beta < 1:
            raise ConfigurationError("base_period, beta and total_iterations must be positive")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.scheme == "lfgadmm":
            return f"L-FGADMM {self.beta}x"
        return {"fl": "FL", "standalone": "Standalone"}[self.scheme]

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden_dims"] = list(self.hidden_dims)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" in obj:
            obj["dataset"] = DatasetConfig(**obj["dataset"])
        if "channel" in obj:
            obj["channel"] = ChannelModel(**obj["channel"])
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        blob = json.dumps({"config": self.to_dict(), "version": __version__}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


class MetricsRecord(NamedTuple):
    round: int
    iteration: int
    training_loss: float
    test_accuracy: float | None
    consensus_residual: float | None
    cumulative_bits: int
    cumulative_energy_J: float


METRIC_COLUMNS = MetricsRecord._fields


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list[MetricsRecord]
    exchange_log: ExchangeLog
    summary: dict
    final_params: dict[int, list[np.ndarray]] = field(repr=False, default_factory=dict)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, metrics: Sequence[MetricsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for rec in metrics:
            writer.writerow([_fmt(v) for v in rec])


def read_metrics_csv(path) -> list[MetricsRecord]:
    def parse(col, text):
        if text == "":
            return None
        if col in ("round", "iteration", "cumulative_bits"):
            return int(text)
        return float(text)

    with open(path, newline="") as fh:
        return [MetricsRecord(*(parse(c, row[c]) for c in METRIC_COLUMNS))
                for row in csv.DictReader(fh)]


def _load_data(config: ExperimentConfig):
    ds = config.dataset
    spec_part = PartitionSpec(ds.per_worker, ds.batch_size)
    n_parts = 1 if config.scheme == "standalone" else config.n_workers
    if ds.kind == "mnist":
        train = load_mnist(ds.data_dir, "train")
        test = load_mnist(ds.data_dir, "test")
        if ds.test_subset is not None:
            test = test.subset(slice(0, ds.test_subset))
        parts = partition_iid(train, spec_part, n_parts, config.data_seed)
        spec = mlp_spec((train.feature_dim, *config.hidden_dims, 10))
        return spec, parts, test
    if ds.kind == "synthetic":
        full, _ = synth_regression(ds.per_worker * n_parts, ds.feature_dim, ds.noise_std,
                                   config.data_seed)
        parts = [full.subset(slice(i * ds.per_worker, (i + 1) * ds.per_worker))
                 for i in range(n_parts)]
        return linear_spec(ds.feature_dim), parts, None
    raise ConfigurationError(f"unknown dataset kind {ds.kind!r}")


def _evaluate(spec, params_by_worker: dict, parts: dict, test: Dataset | None):
    losses = [forward_loss(spec, p, parts[w].as_batch()) for w, p in params_by_worker.items()]
    loss = float(np.mean(losses))
    acc = None
    if test is not None and is_classifier(spec):
        acc = float(np.mean([accuracy(spec, p, test) for p in params_by_worker.values()]))
    return loss, acc


class _Tracker:
    """Accumulates bits and energy from exchange logs and emits metric rows."""

    def __init__(self, positions, channel):
        self.positions = positions
        self.channel = channel
        self.bits = 0
        self.energy = 0.0
        self.log = ExchangeLog()
        self.metrics: list[MetricsRecord] = []

    def add_log(self, log: ExchangeLog) -> None:
        if len(log):
            cost = aggregate_run_cost(log, self.positions, self.channel)
            self.bits += cost.total_bits
            self.energy += cost.total_energy
            self.log.extend(log)

    def record(self, round_idx, k, loss, acc, residual) -> None:
        self.metrics.append(MetricsRecord(round_idx, k, loss, acc, residual,
                                          self.bits, self.energy))


def _check_finite(loss, params_by_worker, last_good, output_dir, k):
    finite = math.isfinite(loss) and all(
        np.all(np.isfinite(v)) for p in params_by_worker.values() for v in p)
    if finite:
        return {w: [v.copy() for v in p] for w, p in params_by_worker.items()}
    checkpoint = None
    if output_dir is not None and last_good is not None:
        checkpoint = Path(output_dir) / "checkpoint.npz"
        checkpoint.parent.mkdir(parents=True, exist_ok=True)
        np.savez(checkpoint, **{f"w{w}_l{i}": v for w, p in last_good.items()
                                for i, v in enumerate(p)})
    raise DivergenceError(f"non-finite training loss at iteration {k}", checkpoint)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    spec, part_list, test = _load_data(config)
    placement = place_workers(max(config.n_workers, 2), config.area_side, config.topology_seed)
    init = init_params(spec, config.init_seed, config.init_scheme)
    out_dir = Path(config.output_dir) if config.output_dir else None
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    tracker = _Tracker(placement.positions, config.channel)
    trace_rows = []
    topo = {"placement": json.loads(placement.to_json())}

    try:
        if config.scheme == "lfgadmm":
            chain = min_path_order(placement)
            topo["chain"] = json.loads(chain.to_json())
            parts = {w: part_list[w] for w in range(config.n_workers)}
            workers = make_chain_workers(chain, init, config.cache_init)
            samplers = make_samplers(part_list, config.dataset.batch_size, config.batch_seed)
            schedule = CommSchedule.for_model([layer.n_params for layer in spec],
                                              config.base_period, config.beta,
                                              config.total_iterations)
            admm_cfg = AdmmConfig(config.rho, config.learning_rate, config.inner_steps,
                                  config.init_seed, config.solver)
            last_good = None
            for k in range(1, config.total_iterations + 1):
                tracker.add_log(run_iteration(workers, k, schedule, admm_cfg, samplers, spec, pool))
                if config.trace:
                    trace_rows.extend((k, w.id, w.last_loss) for w in workers)
                if k % config.base_period == 0:
                    current = {w.id: w.params for w in workers}
                    loss, acc = _evaluate(spec, current, parts, test)
                    last_good = _check_finite(loss, current, last_good, out_dir, k)
                    tracker.record(k // config.base_period, k, loss, acc,
                                   consensus_residual(workers))
            final = {w.id: w.params for w in workers}

        elif config.scheme == "fl":
            server = fl_server(placement)
            topo["fl_server"] = server
            parts = {w: part_list[w] for w in range(config.n_workers)}
            workers = [FlWorker(w, [p.copy() for p in init]) for w in range(config.n_workers)]
            samplers = make_samplers(part_list, config.dataset.batch_size, config.batch_seed)
            fl_cfg = FlConfig(config.base_period, config.learning_rate, server, config.inner_steps)
            last_good = None
            for r in range(1, config.total_iterations // config.base_period + 1):
                k = r * config.base_period
                tracker.add_log(fl_round(workers, server, fl_cfg, samplers, spec, k, pool))
                current = {w.id: w.params for w in workers}
                loss, acc = _evaluate(spec, current, parts, test)
                last_good = _check_finite(loss, current, last_good, out_dir, k)
                tracker.record(r, k, loss, acc, None)
            final = {w.id: w.params for w in workers}

        else:
            parts = {0: part_list[0]}
            sampler = make_samplers(part_list, config.dataset.batch_size, config.batch_seed)[0]
            params = [p.copy() for p in init]
            last_good = None
            for k in range(1, config.total_iterations + 1):
                params, batch_loss = sgd_step(spec, params, sampler.next(), config.learning_rate,
                                              config.inner_steps)
                if config.trace:
                    trace_rows.append((k, 0, batch_loss))
                if k % config.base_period == 0:
                    loss, acc = _evaluate(spec, {0: params}, parts, test)
                    last_good = _check_finite(loss, {0: params}, last_good, out_dir, k)
                    tracker.record(k // config.base_period, k, loss, acc, None)
            final = {0: params}
    finally:
        if pool is not None:
            pool.shutdown()

    last = tracker.metrics[-1] if tracker.metrics else None
    summary = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config_hash": config.digest(),
        "scheme": config.name,
        "rounds": len(tracker.metrics),
        "final_training_loss": last.training_loss if last else None,
        "final_test_accuracy": last.test_accuracy if last else None,
        "total_bits": tracker.bits,
        "total_elements": tracker.log.total_elements(),
        "total_energy_J": tracker.energy,
        "fl_cost_counts": "uplink+downlink" if config.scheme == "fl" else None,
        "config": config.to_dict(),
    }
    result = ExperimentResult(config, tracker.metrics, tracker.log, summary, final)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out_dir / "metrics.csv", tracker.metrics)
        tracker.log.write_csv(out_dir / "exchange_log.csv")
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        (out_dir / "topology.json").write_text(json.dumps(topo, indent=2))
        if config.trace:
            with open(out_dir / "trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(("iteration", "worker_id", "batch_loss"))
                writer.writerows((k, w, repr(v)) for k, w, v in trace_rows)
    return result


@dataclass
class Comparison:
    labels: list[str]
    rows: list[dict]
    summary: dict
    results: list[ExperimentResult] = field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.rows[0]) if self.rows else ["round"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})


def compare_results(results: Sequence[ExperimentResult]) -> Comparison:
    """Align per-round metrics of several runs on their common round grid."""
    labels, seen = [], {}
    for res in results:
        name = res.config.name
        seen[name] = seen.get(name, 0) + 1
        labels.append(name if seen[name] == 1 else f"{name} #{seen[name]}")
    grids = [[(m.round, m.iteration) for m in res.metrics] for res in results]
    n_rows = min(len(g) for g in grids)
    for g in grids[1:]:
        if g[:n_rows] != grids[0][:n_rows]:
            raise AlignmentError("runs do not share a round grid (different base_period?)")
    rows = []
    for i in range(n_rows):
        row = {"round": grids[0][i][0], "iteration": grids[0][i][1]}
        for label, res in zip(labels, results):
            m = res.metrics[i]
            row[f"{label}:training_loss"] = m.training_loss
            row[f"{label}:test_accuracy"] = m.test_accuracy
            row[f"{label}:cumulative_energy_J"] = m.cumulative_energy_J
        rows.append(row)
    summary = {}
    for label, res in zip(labels, results):
        ms = res.metrics[:n_rows]
        summary[label] = {
            "final_test_accuracy": ms[-1].test_accuracy if ms else None,
            "final_training_loss": ms[-1].training_loss if ms else None,
            "total_energy_J": res.summary["total_energy_J"],
            "mean_energy_per_round_J": res.summary["total_energy_J"] / max(len(res.metrics), 1),
            "total_elements": res.summary["total_elements"],
        }
    return Comparison(labels, rows, summary, list(results))


def compare_schemes(configs: Sequence[ExperimentConfig], max_workers: int = 1,
                    output_dir=None) -> Comparison:
    """Run every config (optionally in parallel threads) and align their metrics."""
    configs = list(configs)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(run_experiment, configs))
    else:
        results = [run_experiment(c) for c in configs]
    comparison = compare_results(results)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        comparison.write_csv(out / "comparison.csv")
        (out / "comparison.json").write_text(json.dumps(
            {"schema_version": SCHEMA_VERSION, "schemes": comparison.summary}, indent=2))
    return comparison


def mnist_configs(**overrides) -> list[ExperimentConfig]:
    """L-FGADMM 1x/2x/4x, FL and standalone on the desk-scale MNIST setup."""
    base = ExperimentConfig(**{**MNIST_DEFAULTS, **overrides})
    return [
        base.replace(scheme="lfgadmm", beta=1),
        base.replace(scheme="lfgadmm", beta=2),
        base.replace(scheme="lfgadmm", beta=4),
        base.replace(scheme="fl"),
        base.replace(scheme="standalone"),
    ]


# Step sizes tuned for the 784-256-128-64-32-16-10 MLP; see README.
MNIST_DEFAULTS = dict(rho=0.2, learning_rate=0.05, inner_steps=4, cache_init="params")

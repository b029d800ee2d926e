"""Free-space path loss + Shannon rate energy model for model exchanges.

A transmission of ``e`` model elements over a link of length ``d`` takes
``32 e / (B log2(1 + P / (d^2 N0 B))))`` seconds and costs ``P`` times that
in joules.  Links are interference-free; distances below ``d_min`` are
clamped so that co-located workers keep a finite rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ModelError
from .model import mlp_spec, param_counts as layer_param_counts
from .schedule import (CommSchedule, ExchangeLog, ExchangeRecord, chain_exchange_log,
                       fl_exchange_log)
from .topology import fl_server, min_path_order, place_workers


@dataclass(frozen=True)
class ChannelModel:
    tx_power: float = 1e-3        # W
    bandwidth: float = 1e6        # Hz
    noise_density: float = 1e-9   # W/Hz
    bits_per_element: int = 32
    d_min: float = 1.0            # m

    def __post_init__(self):
        for name in ("tx_power", "bandwidth", "noise_density", "bits_per_element", "d_min"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")


class CostRecord(NamedTuple):
    run_id: int
    scheme: str
    total_bits: int
    total_duration: float
    total_energy: float


def snr(distance: float, channel: ChannelModel) -> float:
    d = max(float(distance), channel.d_min)
    return channel.tx_power / (d * d * channel.noise_density * channel.bandwidth)


def rate(snr_value: float, channel: ChannelModel) -> float:
    if snr_value < 0:
        raise ModelError("negative SNR")
    return channel.bandwidth * math.log2(1.0 + snr_value)


def transmission_cost(element_count: int, distance: float,
                      channel: ChannelModel) -> tuple[float, float]:
    """``(duration_s, energy_J)`` for sending ``element_count`` elements over ``distance``."""
    if element_count < 0:
        raise ModelError("element_count must be non-negative")
    if element_count == 0:
        return 0.0, 0.0
    r = rate(snr(distance, channel), channel)
    if not r > 0:
        raise ModelError(f"zero achievable rate at distance {distance}")
    duration = element_count * channel.bits_per_element / r
    return duration, channel.tx_power * duration


def aggregate_run_cost(log: ExchangeLog | Sequence[ExchangeRecord], positions: np.ndarray,
                       channel: ChannelModel, run_id: int = 0, scheme: str = "") -> CostRecord:
    """Sum transmission costs over every logged transmission.

    Each row's distance is taken between its sender and receiver positions,
    so the same routine prices chain neighbours and worker-server links.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    bits, durations, energies = 0, [], []
    # transmissions between the same pair with the same payload cost the same
    cache: dict[tuple[int, int, int], tuple[float, float]] = {}
    for row in log:
        key = (row.sender_id, row.receiver_id, row.element_count)
        if key not in cache:
            for wid in key[:2]:
                if not 0 <= wid < n:
                    raise DataError(f"worker id {wid} has no position")
            d = float(np.linalg.norm(positions[row.sender_id] - positions[row.receiver_id]))
            cache[key] = transmission_cost(row.element_count, d, channel)
        dur, en = cache[key]
        bits += row.element_count * channel.bits_per_element
        durations.append(dur)
        energies.append(en)
    return CostRecord(run_id, scheme, bits, math.fsum(durations), math.fsum(energies))


def empirical_ccdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sorted samples and ``P(X > x)`` evaluated at each of them."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    # number strictly greater than xs[i]; handles repeated values
    greater = n - np.searchsorted(xs, xs, side="right")
    return xs, greater / n


@dataclass(frozen=True)
class CostScheme:
    """Exchange pattern to price: ``kind`` is ``lfgadmm``, ``fl`` or ``standalone``."""

    label: str
    kind: str
    beta: int = 1

    def __post_init__(self):
        if self.kind not in ("lfgadmm", "fl", "standalone"):
            raise ConfigurationError(f"unknown scheme kind {self.kind!r}")


DEFAULT_SCHEMES = (
    CostScheme("L-FGADMM 1x", "lfgadmm", 1),
    CostScheme("L-FGADMM 2x", "lfgadmm", 2),
    CostScheme("L-FGADMM 4x", "lfgadmm", 4),
    CostScheme("FL", "fl"),
    CostScheme("Standalone", "standalone"),
)


@dataclass
class CcdfResult:
    energies: dict[str, np.ndarray]          # per scheme, indexed by run id
    meta: dict = field(default_factory=dict)

    def ccdf(self, label: str) -> tuple[np.ndarray, np.ndarray]:
        return empirical_ccdf(self.energies[label])

    def summary(self) -> dict:
        out = {}
        for label, e in self.energies.items():
            out[label] = {"mean": float(np.mean(e)), "variance": float(np.var(e)),
                          "min": float(np.min(e)), "max": float(np.max(e))}
        return out

    def rows(self):
        """``(scheme, run_id, total_energy_J, ccdf_value)`` in run order."""
        for label, e in self.energies.items():
            xs, cc = empirical_ccdf(e)
            # value of the CCDF at each run's own energy
            at = dict(zip(xs.tolist(), cc.tolist()))
            for run_id, val in enumerate(e):
                yield label, run_id, float(val), at[float(val)]


def scheme_log(scheme: CostScheme, placement, param_counts: Sequence[int], base_period: int,
               total_iterations: int) -> ExchangeLog:
    """Replay the transmissions ``scheme`` makes over ``total_iterations``."""
    if scheme.kind == "standalone":
        return ExchangeLog()
    if scheme.kind == "fl":
        return fl_exchange_log(range(placement.n), fl_server(placement), base_period,
                               total_iterations, sum(param_counts))
    schedule = CommSchedule.for_model(param_counts, base_period, scheme.beta, total_iterations)
    return chain_exchange_log(min_path_order(placement).order, schedule, param_counts)


def _one_run(run_id, seed_seq, schemes, param_counts, base_period, total_iterations,
             n_workers, area_side, channel):
    placement = place_workers(n_workers, area_side, np.random.default_rng(seed_seq))
    return [
        aggregate_run_cost(scheme_log(s, placement, param_counts, base_period, total_iterations),
                           placement.positions, channel, run_id, s.label).total_energy
        for s in schemes
    ]


def ccdf_experiment(n_runs: int = 1000, schemes: Sequence[CostScheme] = DEFAULT_SCHEMES,
                    channel: ChannelModel = ChannelModel(), seed: int = 0, *,
                    param_counts: Sequence[int] | None = None, base_period: int = 5,
                    total_iterations: int = 500, n_workers: int = 4, area_side: float = 100.0,
                    max_workers: int | None = None) -> CcdfResult:
    """Monte-Carlo distribution of total communication energy per scheme.

    Every run drops ``n_workers`` uniformly in an ``area_side`` square and
    prices each scheme's full exchange pattern over ``total_iterations``.
    Run ``i`` draws its placement from the ``i``-th child of ``seed`` so the
    result does not depend on execution order or ``max_workers``.
    """
    if param_counts is None:
        param_counts = layer_param_counts(mlp_spec())
    children = np.random.SeedSequence(seed).spawn(n_runs)
    args = (schemes, list(param_counts), base_period, total_iterations, n_workers, area_side, channel)
    if max_workers and max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(lambda i: _one_run(i, children[i], *args), range(n_runs)))
    else:
        results = [_one_run(i, children[i], *args) for i in range(n_runs)]
    table = np.array(results, dtype=float).reshape(n_runs, len(schemes))
    energies = {s.label: table[:, j] for j, s in enumerate(schemes)}
    meta = {"n_runs": n_runs, "seed": seed, "base_period": base_period,
            "total_iterations": total_iterations, "n_workers": n_workers,
            "area_side": area_side, "d_min": channel.d_min,
            "fl_counts": "uplink and downlink, full model, every base_period iterations"}
    return CcdfResult(energies, meta)

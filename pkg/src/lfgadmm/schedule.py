"""Layer-wise communication periods and the exchange log they generate."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import ConfigurationError


@dataclass(frozen=True)
class CommSchedule:
    """Exchange period ``base_period`` for every layer except ``largest_layer``,
    which is exchanged every ``beta * base_period`` iterations.
    """

    base_period: int
    beta: int
    largest_layer: int
    n_layers: int
    total_iterations: int

    def __post_init__(self):
        if self.base_period < 1 or self.beta < 1 or self.total_iterations < 1:
            raise ConfigurationError("base_period, beta and total_iterations must be positive")
        if not 0 <= self.largest_layer < self.n_layers:
            raise ConfigurationError(f"largest_layer {self.largest_layer} outside 0..{self.n_layers - 1}")

    @classmethod
    def for_model(cls, param_counts: Sequence[int], base_period: int, beta: int,
                  total_iterations: int) -> "CommSchedule":
        # ties resolve to the lowest layer index
        largest = max(range(len(param_counts)), key=lambda i: (param_counts[i], -i))
        return cls(base_period, beta, largest, len(param_counts), total_iterations)

    def period(self, layer: int) -> int:
        return self.base_period * self.beta if layer == self.largest_layer else self.base_period

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(self.period(layer) for layer in range(self.n_layers))

    def due_layers(self, k: int) -> list[int]:
        return due_layers(k, self)

    def exchange_count(self, layer: int) -> int:
        return self.total_iterations // self.period(layer)


def due_layers(k: int, schedule) -> list[int]:
    """Layers whose period divides iteration ``k`` (``k >= 1``)."""
    if k < 1:
        raise ConfigurationError("iterations are numbered from 1")
    return [layer for layer, p in enumerate(schedule.periods) if k % p == 0]


class ExchangeRecord(NamedTuple):
    iteration: int
    sender_id: int
    receiver_id: int
    layer_index: int
    element_count: int


LOG_COLUMNS = ExchangeRecord._fields


class ExchangeLog:
    """Ordered list of directed layer transmissions."""

    def __init__(self, rows: Iterable[ExchangeRecord] = ()):
        self.rows: list[ExchangeRecord] = [ExchangeRecord(*r) for r in rows]

    def add(self, iteration, sender_id, receiver_id, layer_index, element_count) -> None:
        self.rows.append(ExchangeRecord(int(iteration), int(sender_id), int(receiver_id),
                                        int(layer_index), int(element_count)))

    def extend(self, other: "ExchangeLog | Iterable[ExchangeRecord]") -> None:
        self.rows.extend(other.rows if isinstance(other, ExchangeLog) else other)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ExchangeRecord]:
        return iter(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, ExchangeLog) and self.rows == other.rows

    def __repr__(self) -> str:
        return f"ExchangeLog({len(self.rows)} rows)"

    def total_elements(self) -> int:
        return sum(r.element_count for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            writer.writerows(self.rows)

    @classmethod
    def read_csv(cls, path) -> "ExchangeLog":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            return cls(ExchangeRecord(*(int(row[c]) for c in LOG_COLUMNS)) for row in reader)


def chain_exchange_log(order: Sequence[int], schedule: CommSchedule,
                       param_counts: Sequence[int]) -> ExchangeLog:
    """Every transmission a chain run emits, without training anything.

    Heads (even chain positions) send before tails within an iteration,
    matching the engine's ordering.
    """
    log = ExchangeLog()
    n = len(order)
    for k in range(1, schedule.total_iterations + 1):
        due = due_layers(k, schedule)
        if not due:
            continue
        for parity in (0, 1):
            for pos in range(parity, n, 2):
                for nb in (pos - 1, pos + 1):
                    if 0 <= nb < n:
                        for layer in due:
                            log.add(k, order[pos], order[nb], layer, param_counts[layer])
    return log


def fl_exchange_log(worker_ids: Sequence[int], server_id: int, period: int,
                    total_iterations: int, model_size: int) -> ExchangeLog:
    """Uplink from every non-server worker, then downlink to each, once per round."""
    log = ExchangeLog()
    others = [w for w in worker_ids if w != server_id]
    for k in range(period, total_iterations + 1, period):
        for w in others:
            log.add(k, w, server_id, -1, model_size)
        for w in others:
            log.add(k, server_id, w, -1, model_size)
    return log

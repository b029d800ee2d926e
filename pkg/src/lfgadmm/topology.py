"""Worker placement, minimum-length chain ordering and FL server choice."""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

EXACT_MAX_WORKERS = 10
# lengths closer than this (relative) count as ties
_TIE_TOL = 1e-9


class Group(str, enum.Enum):
    HEAD = "head"
    TAIL = "tail"


@dataclass(frozen=True)
class Placement:
    positions: np.ndarray  # (n, 2) metres
    area_side: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 2:
            raise ConfigurationError("a placement needs at least two (x, y) positions")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1))

    def to_json(self) -> str:
        return json.dumps({"positions": self.positions.tolist(), "area_side": self.area_side})

    @classmethod
    def from_json(cls, text: str) -> "Placement":
        obj = json.loads(text)
        return cls(np.array(obj["positions"], dtype=float), float(obj["area_side"]))


@dataclass(frozen=True)
class ChainOrder:
    order: tuple[int, ...]
    groups: tuple[Group, ...]  # indexed by worker id

    @classmethod
    def from_order(cls, order) -> "ChainOrder":
        order = tuple(int(i) for i in order)
        if sorted(order) != list(range(len(order))):
            raise ConfigurationError(f"{order} is not a permutation of 0..{len(order) - 1}")
        groups = [Group.HEAD] * len(order)
        for pos, worker in enumerate(order):
            groups[worker] = Group.HEAD if pos % 2 == 0 else Group.TAIL
        return cls(order, tuple(groups))

    def neighbors(self, worker: int) -> tuple[int | None, int | None]:
        pos = self.order.index(worker)
        left = self.order[pos - 1] if pos > 0 else None
        right = self.order[pos + 1] if pos + 1 < len(self.order) else None
        return left, right

    def to_json(self) -> str:
        return json.dumps({"order": list(self.order), "groups": [g.value for g in self.groups]})

    @classmethod
    def from_json(cls, text: str) -> "ChainOrder":
        return cls.from_order(json.loads(text)["order"])


def place_workers(n: int, area_side: float, seed: int) -> Placement:
    if n < 2:
        raise ConfigurationError("need at least two workers")
    if area_side <= 0:
        raise ConfigurationError("area_side must be positive")
    rng = np.random.default_rng(seed)
    return Placement(rng.uniform(0.0, area_side, size=(n, 2)), float(area_side))


def path_length(order, dist: np.ndarray) -> float:
    return float(sum(dist[a, b] for a, b in zip(order[:-1], order[1:])))


def _canonical(order):
    order = tuple(order)
    return order if order[0] <= order[-1] else order[::-1]


def _exact_path(dist: np.ndarray) -> tuple[int, ...]:
    n = dist.shape[0]
    best, best_len = tuple(range(n)), np.inf
    # lexicographic enumeration; keeping only strict improvements gives the
    # lowest-index tie-break, and requiring first < last visits each path once
    for perm in itertools.permutations(range(n)):
        if perm[0] > perm[-1]:
            continue
        length = path_length(perm, dist)
        if length < best_len - _TIE_TOL * max(1.0, length):
            best, best_len = perm, length
    return best


def _nearest_neighbor_path(dist: np.ndarray) -> tuple[int, ...]:
    n = dist.shape[0]
    best, best_len = None, np.inf
    for start in range(n):
        path, left = [start], set(range(n)) - {start}
        while left:
            last = path[-1]
            nxt = min(left, key=lambda j: (dist[last, j], j))
            path.append(nxt)
            left.remove(nxt)
        length = path_length(path, dist)
        if length < best_len - _TIE_TOL * max(1.0, length):
            best, best_len = path, length
    return tuple(best)


def min_path_order(placement: Placement, exact: bool | None = None) -> ChainOrder:
    """Open path through all workers of minimum total Euclidean length.

    Exhaustive for up to ``EXACT_MAX_WORKERS`` workers, best-start
    nearest-neighbour beyond.  The returned direction starts at the lower
    indexed endpoint and chain position 0 is a head.
    """
    dist = placement.distances()
    if exact is None:
        exact = placement.n <= EXACT_MAX_WORKERS
    order = _exact_path(dist) if exact else _nearest_neighbor_path(dist)
    return ChainOrder.from_order(_canonical(order))


def fl_server(placement: Placement) -> int:
    """Worker with the smallest sum of distances to all others (lowest index on ties)."""
    sums = placement.distances().sum(axis=1)
    return int(np.flatnonzero(sums <= sums.min() + _TIE_TOL * max(1.0, sums.min()))[0])

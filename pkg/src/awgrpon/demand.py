"""Rack-to-rack demand sets and block arithmetic.

Random draws come from SplitMix64 (Steele, Lea & Flood 2014): the state
advances by 0x9E3779B97F4A7C15 and each output is the state passed through
the ``mix`` finaliser below. ``below(n)`` maps a draw to ``[0, n)`` by
rejection sampling against the largest multiple of ``n`` under 2**64, so
any language with 64-bit integers reproduces the same demand streams.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence

from .topology import Topology, natural_key

MASK64 = (1 << 64) - 1
DEFAULT_GRID: tuple[Fraction, ...] = tuple(Fraction(v) for v in (1, 3, 5, 7, 9))
EVEN_GRID: tuple[Fraction, ...] = tuple(Fraction(v) for v in (2, 4, 6, 8, 10))


class DemandError(ValueError):
    pass


def as_fraction(value: Real | str | Fraction) -> Fraction:
    """Exact rational from an int, decimal string, or float (taken at its repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n < 1:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n


@dataclass(frozen=True)
class Demand:
    source: str
    dest: str
    volume_gbps: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "volume_gbps", as_fraction(self.volume_gbps))
        if self.source == self.dest:
            raise DemandError(f"self-demand {self.source!r} -> {self.dest!r}")
        if self.volume_gbps <= 0:
            raise DemandError(f"demand {self.source}->{self.dest}: volume must be positive")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.dest)


class ScenarioKind(str, enum.Enum):
    ALL_NODES = "AllNodes"
    SUBSET_ACTIVE = "SubsetActive"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.ALL_NODES
    demand_count: int = 12
    volume_grid: tuple[Fraction, ...] = DEFAULT_GRID
    seed: int = 1
    active_racks: tuple[str, ...] = ()
    # sample ordered pairs without replacement instead of independently
    distinct_pairs: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "volume_grid", tuple(as_fraction(v) for v in self.volume_grid))
        object.__setattr__(self, "active_racks", tuple(self.active_racks))

    def check(self, topo: Topology) -> None:
        if self.demand_count < 0:
            raise DemandError("scenario.demand_count must be >= 0")
        grid = self.volume_grid
        if not grid:
            raise DemandError("scenario.volume_grid must be non-empty")
        if any(v <= 0 for v in grid) or any(a >= b for a, b in zip(grid, grid[1:])):
            raise DemandError("scenario.volume_grid must be positive and strictly increasing")
        if not 0 <= self.seed <= MASK64:
            raise DemandError("scenario.seed must fit in 64 bits")
        if self.kind == ScenarioKind.SUBSET_ACTIVE:
            unknown = [r for r in self.active_racks if not topo.is_rack(r)]
            if unknown:
                raise DemandError(f"scenario.active_racks: not racks: {unknown}")
            if len(set(self.active_racks)) < 2:
                raise DemandError("scenario.active_racks needs at least 2 racks")
        racks = self.racks(topo)
        if len(racks) < 2:
            raise DemandError("fewer than 2 eligible racks")
        if self.distinct_pairs and self.demand_count > len(racks) * (len(racks) - 1):
            raise DemandError("scenario.demand_count exceeds the number of distinct rack pairs")

    def racks(self, topo: Topology) -> list[str]:
        if self.kind == ScenarioKind.SUBSET_ACTIVE:
            return sorted(set(self.active_racks), key=natural_key)
        return list(topo.racks)


def generate_demands(topo: Topology, sc: Scenario) -> list[Demand]:
    """Seeded demand list for a scenario.

    Independent draws take, per demand, a source, a destination among the
    other racks and a grid volume, in that order. With ``distinct_pairs`` the
    ordered pairs are Fisher-Yates shuffled first and volumes follow. Either
    way the first ``k`` demands do not depend on ``demand_count``.
    """
    sc.check(topo)
    racks = sc.racks(topo)
    rng = SplitMix64(sc.seed)
    grid = sc.volume_grid
    out: list[Demand] = []
    if sc.distinct_pairs:
        pairs = topo.rack_pairs(racks)
        for i in range(len(pairs) - 1, 0, -1):
            j = rng.below(i + 1)
            pairs[i], pairs[j] = pairs[j], pairs[i]
        for s, d in pairs[: sc.demand_count]:
            out.append(Demand(s, d, grid[rng.below(len(grid))]))
        return out
    for _ in range(sc.demand_count):
        s = racks[rng.below(len(racks))]
        others = [r for r in racks if r != s]
        d = others[rng.below(len(others))]
        out.append(Demand(s, d, grid[rng.below(len(grid))]))
    return out


def merge_demands(demands: Iterable[Demand]) -> list[Demand]:
    """Sum volumes of repeated (source, dest) pairs; canonical pair order."""
    total: dict[tuple[str, str], Fraction] = {}
    for dm in demands:
        total[dm.pair] = total.get(dm.pair, Fraction(0)) + dm.volume_gbps
    keys = sorted(total, key=lambda p: (natural_key(p[0]), natural_key(p[1])))
    return [Demand(s, d, total[(s, d)]) for s, d in keys]


def with_volume(demands: Sequence[Demand], volume: Real | Fraction) -> list[Demand]:
    return [Demand(dm.source, dm.dest, as_fraction(volume)) for dm in demands]


def blocks_required(volume_gbps: Real | Fraction, block_capacity_gbps: Real | Fraction) -> int:
    volume = as_fraction(volume_gbps)
    cap = as_fraction(block_capacity_gbps)
    if cap <= 0:
        raise ValueError("block capacity must be positive")
    if volume < 0:
        raise ValueError("volume must be non-negative")
    return math.ceil(volume / cap)

"""Integer program for granting wavelength/time-slot blocks to rack pairs.

Variables (all binary):

* ``mu[s,d,j,t]``   block (wavelength j, slot t) is granted to pair (s, d)
* ``delta[s,d,j]``  pair (s, d) uses wavelength j
* ``x[s,d,j,t,r]``  granted block (j, t) of (s, d) travels on candidate path r;
  fixed to 0 when path r cannot carry wavelength j

Constraint families:

* F1  sum_r x[s,d,j,t,r] == mu[s,d,j,t]
* F2  per link and (j, t): at most one path variable; per link: at most
      floor(link rate / block rate) path variables in total
* F3  sum_{j,t} mu[s,d,j,t] >= ceil(V_sd / c)
* F4  sum_j delta[s,d,j] <= 1 and mu[s,d,j,t] <= delta[s,d,j]
* F5  per (d, j, t): sum_s mu[s,d,j,t] <= 1
* F6  per (s, j, t): sum_d mu[s,d,j,t] <= 1

Objective: minimise sum mu.

``check_allocation`` re-derives every family directly from the allocation
and the topology; it never reads the rows built here.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .demand import Demand, as_fraction, blocks_required, merge_demands
from .topology import (
    AWGR_KINDS,
    Path,
    Topology,
    TopologyError,
    candidate_paths,
    natural_key,
)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ResourcePlan:
    name: str
    wavelengths: int
    slots: int
    block_gbps: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_gbps", as_fraction(self.block_gbps))
        if self.wavelengths < 1 or self.slots < 1:
            raise ModelError(f"plan {self.name}: wavelengths and slots must be >= 1")
        if self.block_gbps <= 0:
            raise ModelError(f"plan {self.name}: block capacity must be positive")

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return [(j, t) for j in range(self.wavelengths) for t in range(self.slots)]

    @property
    def wavelength_gbps(self) -> Fraction:
        return self.block_gbps * self.slots


TDM = ResourcePlan("tdm", 4, 4, Fraction(5, 2))
WDM = ResourcePlan("wdm", 4, 1, Fraction(10))
PLANS = {"tdm": TDM, "wdm": WDM}


def plan_by_name(name: str) -> ResourcePlan:
    try:
        return PLANS[name.lower()]
    except KeyError:
        raise ModelError(f"unknown plan {name!r} (expected one of {sorted(PLANS)})") from None


def small_plan(wavelengths: int, slots: int, wavelength_gbps: float = 10) -> ResourcePlan:
    """A plan splitting each ``wavelength_gbps`` wavelength into ``slots`` blocks."""
    return ResourcePlan(f"w{wavelengths}t{slots}", wavelengths, slots,
                        as_fraction(wavelength_gbps) / slots)


def link_block_capacity(link_total_gbps: float, plan: ResourcePlan) -> int:
    return math.floor(as_fraction(link_total_gbps) / plan.block_gbps)


def check_plan(topo: Topology, plan: ResourcePlan) -> None:
    need = set(range(plan.wavelengths))
    per_pair = plan.wavelengths * plan.slots * plan.block_gbps
    for link in topo.links:
        if not (topo.is_rack(link.src.node) or topo.is_rack(link.dst.node)):
            continue
        if per_pair > as_fraction(link.total_gbps):
            raise ModelError(
                f"plan {plan.name}: W*T*c = {float(per_pair)} Gbps exceeds link {link.id} "
                f"({link.total_gbps} Gbps)")
        if not need <= link.wavelengths:
            raise ModelError(f"plan {plan.name}: link {link.id} lacks wavelengths "
                             f"{sorted(need - link.wavelengths)}")


# -- allocations ---------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Grant:
    """One granted block routed on one path (given as link ids)."""

    source: str
    dest: str
    wavelength: int
    slot: int
    path: tuple[str, ...]

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.dest)

    @property
    def block(self) -> tuple[str, str, int, int]:
        return (self.source, self.dest, self.wavelength, self.slot)


def _grant_key(g: Grant) -> tuple:
    return (natural_key(g.source), natural_key(g.dest), g.wavelength, g.slot,
            tuple(natural_key(i) for i in g.path))


@dataclass(frozen=True)
class Allocation:
    grants: tuple[Grant, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "grants", tuple(sorted(self.grants, key=_grant_key)))

    @property
    def block_count(self) -> int:
        return len({g.block for g in self.grants})

    def by_pair(self) -> dict[tuple[str, str], list[Grant]]:
        out: dict[tuple[str, str], list[Grant]] = defaultdict(list)
        for g in self.grants:
            out[g.pair].append(g)
        return dict(out)

    def link_occupancy(self) -> dict[str, list[tuple[str, str, int, int]]]:
        occ: dict[str, list[tuple[str, str, int, int]]] = defaultdict(list)
        for g in self.grants:
            for lid in g.path:
                occ[lid].append(g.block)
        return {k: occ[k] for k in sorted(occ, key=natural_key)}


def granted_capacity_gbps(alloc: Allocation, plan: ResourcePlan) -> Fraction:
    return alloc.block_count * plan.block_gbps


# -- independent checker ---------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    family: str  # F1..F6, AWGR or RANGE
    indices: tuple
    message: str

    def __str__(self) -> str:
        return f"[{self.family}] {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def families(self) -> set[str]:
        return {v.family for v in self.violations}

    def add(self, family: str, indices: tuple, message: str) -> None:
        self.violations.append(Violation(family, indices, message))


def _walk_path(topo: Topology, grant: Grant, report: ValidationReport) -> list[int] | None:
    """Check a grant's path end to end; return AWGR-forced wavelengths or None if broken."""
    idx = grant.block
    if not grant.path:
        report.add("F1", idx, f"block {idx} is not routed")
        return None
    links = []
    for lid in grant.path:
        link = topo.link_index.get(lid)
        if link is None:
            report.add("F1", idx + (lid,), f"block {idx} uses unknown link {lid!r}")
            return None
        links.append(link)
    if links[0].src.node != grant.source or links[-1].dst.node != grant.dest:
        report.add("F1", idx, f"path of block {idx} does not run {grant.source}->{grant.dest}")
        return None
    for a, b in zip(links, links[1:]):
        if a.dst.node != b.src.node:
            report.add("F1", idx + (a.id, b.id), f"path of block {idx} breaks between {a.id} and {b.id}")
            return None
    visited = [links[0].src.node] + [l.dst.node for l in links]
    if len(set(visited)) != len(visited):
        report.add("F1", idx, f"path of block {idx} revisits a node")
        return None
    for mid in visited[1:-1]:
        if topo.is_rack(mid):
            report.add("F1", idx + (mid,), f"path of block {idx} relays through rack {mid}")
            return None
    forced = []
    for a, b in zip(links, links[1:]):
        node = topo.node_index[a.dst.node]
        if node.kind in AWGR_KINDS and a.dst.port is not None and b.src.port is not None:
            amap = topo.awgr_maps.get(node.id)
            if amap is not None:
                forced.append(amap.wavelength(a.dst.port, b.src.port))
    for link in links:
        if grant.wavelength not in link.wavelengths:
            report.add("AWGR", idx + (link.id,),
                       f"link {link.id} does not carry wavelength {grant.wavelength}")
    return forced


def check_allocation(topo: Topology, demands: Sequence[Demand], plan: ResourcePlan,
                     alloc: Allocation) -> ValidationReport:
    report = ValidationReport()
    wanted = {dm.pair: dm for dm in merge_demands(demands)}

    seen_blocks: dict[tuple, int] = defaultdict(int)
    valid: list[Grant] = []
    for g in alloc.grants:
        idx = g.block
        if g.pair not in wanted:
            report.add("RANGE", idx, f"grant for pair {g.source}->{g.dest} with no demand")
            continue
        if not (0 <= g.wavelength < plan.wavelengths and 0 <= g.slot < plan.slots):
            report.add("RANGE", idx, f"block {idx} outside the {plan.wavelengths}x{plan.slots} grid")
            continue
        seen_blocks[idx] += 1
        forced = _walk_path(topo, g, report)
        if forced is None:
            continue
        for w in forced:
            if w != g.wavelength:
                report.add("AWGR", idx, f"block {idx} path forces wavelength {w}")
                break
        valid.append(g)

    for idx, n in sorted(seen_blocks.items(), key=lambda kv: str(kv[0])):
        if n > 1:
            report.add("F1", idx, f"block {idx} routed {n} times")

    # F2: clash and capacity per link
    per_cell: dict[tuple[str, int, int], int] = defaultdict(int)
    per_link: dict[str, int] = defaultdict(int)
    for g in valid:
        for lid in g.path:
            per_cell[(lid, g.wavelength, g.slot)] += 1
            per_link[lid] += 1
    for (lid, j, t), n in sorted(per_cell.items(), key=lambda kv: (natural_key(kv[0][0]), kv[0][1:])):
        if n > 1:
            report.add("F2", (lid, j, t), f"link {lid} carries block ({j},{t}) {n} times")
    for lid, n in sorted(per_link.items(), key=lambda kv: natural_key(kv[0])):
        cap = link_block_capacity(topo.link_index[lid].total_gbps, plan)
        if n > cap:
            report.add("F2", (lid,), f"link {lid} carries {n} blocks, capacity {cap}")

    blocks_of: dict[tuple[str, str], set[tuple[int, int]]] = defaultdict(set)
    for g in alloc.grants:
        if g.pair in wanted:
            blocks_of[g.pair].add((g.wavelength, g.slot))

    for pair, dm in wanted.items():
        need = blocks_required(dm.volume_gbps, plan.block_gbps)
        have = len(blocks_of.get(pair, ()))
        if have < need:
            report.add("F3", pair, f"{pair[0]}->{pair[1]} has {have} blocks, needs {need}")
        wls = sorted({j for j, _ in blocks_of.get(pair, ())})
        if len(wls) > 1:
            report.add("F4", pair, f"{pair[0]}->{pair[1]} uses wavelengths {wls}")

    rx: dict[tuple[str, int, int], set[str]] = defaultdict(set)
    tx: dict[tuple[str, int, int], set[str]] = defaultdict(set)
    for (s, d), cells in blocks_of.items():
        for j, t in cells:
            rx[(d, j, t)].add(s)
            tx[(s, j, t)].add(d)
    for (d, j, t), srcs in sorted(rx.items(), key=lambda kv: (natural_key(kv[0][0]), kv[0][1:])):
        if len(srcs) > 1:
            report.add("F5", (d, j, t), f"{d} receives ({j},{t}) from {sorted(srcs, key=natural_key)}")
    for (s, j, t), dsts in sorted(tx.items(), key=lambda kv: (natural_key(kv[0][0]), kv[0][1:])):
        if len(dsts) > 1:
            report.add("F6", (s, j, t), f"{s} sends ({j},{t}) to {sorted(dsts, key=natural_key)}")
    return report


# -- the integer program -----------------------------------------------------------

@dataclass(frozen=True)
class PairData:
    source: str
    dest: str
    volume_gbps: Fraction
    blocks: int
    paths: tuple[Path, ...]
    # usable[j] = indices of paths that can carry wavelength j
    usable: tuple[tuple[int, ...], ...]

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.dest)


@dataclass(frozen=True)
class Row:
    family: str
    label: tuple
    terms: tuple[tuple[int, int], ...]  # (variable index, coefficient)
    sense: str  # "<=", ">=" or "=="
    rhs: int

    def holds(self, values: Sequence[int]) -> bool:
        lhs = sum(c * values[v] for v, c in self.terms)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass(frozen=True, eq=False)
class IlpInstance:
    topology: Topology
    plan: ResourcePlan
    demands: tuple[Demand, ...]
    pairs: tuple[PairData, ...]
    variables: tuple[tuple, ...]
    upper: tuple[int, ...]
    rows: tuple[Row, ...]
    objective: tuple[int, ...]

    @cached_property
    def index(self) -> Mapping[tuple, int]:
        return {v: i for i, v in enumerate(self.variables)}

    @property
    def mu_count(self) -> int:
        return len(self.objective)

    @property
    def counting_bound(self) -> int:
        return sum(p.blocks for p in self.pairs)

    def violated(self, values: Sequence[int]) -> list[Row]:
        """Rows (and fixed-to-zero bounds, as AWGR rows) broken by a 0/1 assignment."""
        bad = []
        for i, (v, ub) in enumerate(zip(values, self.upper)):
            if v not in (0, 1):
                raise ValueError(f"variable {self.variables[i]} is not binary")
            if v > ub:
                bad.append(Row("AWGR", self.variables[i], ((i, 1),), "<=", ub))
        bad.extend(r for r in self.rows if not r.holds(values))
        return bad

    def values_from(self, assignment: Mapping[tuple, int]) -> list[int]:
        vals = [0] * len(self.variables)
        for key, v in assignment.items():
            vals[self.index[key]] = v
        return vals

    def encode(self, alloc: Allocation) -> list[int]:
        """0/1 vector for an allocation whose paths are all candidate paths."""
        vals = [0] * len(self.variables)
        lookup = {p.pair: p for p in self.pairs}
        for g in alloc.grants:
            pd = lookup[g.pair]
            vals[self.index[("mu", g.source, g.dest, g.wavelength, g.slot)]] = 1
            vals[self.index[("delta", g.source, g.dest, g.wavelength)]] = 1
            r = [p.link_ids for p in pd.paths].index(g.path)
            vals[self.index[("x", g.source, g.dest, g.wavelength, g.slot, r)]] = 1
        return vals

    def decode(self, values: Sequence[int]) -> Allocation:
        """Allocation from a 0/1 vector: one grant per (granted block, chosen path).

        A granted block with no chosen path becomes a grant with an empty
        path; ``x`` entries on blocks that are not granted are dropped.
        """
        grants = []
        lookup = {p.pair: p for p in self.pairs}
        routed: dict[tuple, list[int]] = defaultdict(list)
        for i, key in enumerate(self.variables):
            if key[0] == "x" and values[i]:
                routed[key[1:5]].append(key[5])
        for i in self.objective:
            if not values[i]:
                continue
            _, s, d, j, t = self.variables[i]
            paths = lookup[(s, d)].paths
            chosen = routed.get((s, d, j, t), [])
            if not chosen:
                grants.append(Grant(s, d, j, t, ()))
            for r in chosen:
                grants.append(Grant(s, d, j, t, paths[r].link_ids))
        return Allocation(tuple(grants))

    def fingerprint(self) -> str:
        """Digest of the constraint system; volumes enter only through F3 right-hand sides."""
        h = hashlib.sha256()
        h.update(repr((self.topology.name, self.plan.wavelengths, self.plan.slots,
                       str(self.plan.block_gbps))).encode())
        h.update(repr(self.variables).encode())
        h.update(repr(self.upper).encode())
        h.update(repr([(r.family, r.label, r.terms, r.sense, r.rhs) for r in self.rows]).encode())
        return h.hexdigest()


def build_instance(topo: Topology, demands: Iterable[Demand], plan: ResourcePlan) -> IlpInstance:
    check_plan(topo, plan)
    merged = merge_demands(demands)
    pairs = []
    for dm in merged:
        try:
            paths = candidate_paths(topo, dm.source, dm.dest)
        except TopologyError as exc:
            raise ModelError(f"demand {dm.source}->{dm.dest}: {exc}") from None
        if not paths:
            raise ModelError(f"demand {dm.source}->{dm.dest} has no candidate path")
        usable = tuple(tuple(r for r, p in enumerate(paths) if p.carries(j))
                       for j in range(plan.wavelengths))
        pairs.append(PairData(dm.source, dm.dest, dm.volume_gbps,
                              blocks_required(dm.volume_gbps, plan.block_gbps), paths, usable))

    variables: list[tuple] = []
    upper: list[int] = []
    index: dict[tuple, int] = {}

    def var(key: tuple, ub: int = 1) -> int:
        index[key] = len(variables)
        variables.append(key)
        upper.append(ub)
        return index[key]

    W, T = plan.wavelengths, plan.slots
    for pd in pairs:
        s, d = pd.pair
        for j in range(W):
            for t in range(T):
                var(("mu", s, d, j, t))
    objective = tuple(range(len(variables)))
    for pd in pairs:
        s, d = pd.pair
        for j in range(W):
            var(("delta", s, d, j))
    for pd in pairs:
        s, d = pd.pair
        for j in range(W):
            for t in range(T):
                for r in range(len(pd.paths)):
                    var(("x", s, d, j, t, r), 1 if r in pd.usable[j] else 0)

    rows: list[Row] = []
    cell_terms: dict[tuple[str, int, int], list[tuple[int, int]]] = defaultdict(list)
    link_terms: dict[str, list[tuple[int, int]]] = defaultdict(list)
    rx_terms: dict[tuple[str, int, int], list[tuple[int, int]]] = defaultdict(list)
    tx_terms: dict[tuple[str, int, int], list[tuple[int, int]]] = defaultdict(list)
    for pd in pairs:
        s, d = pd.pair
        rows.append(Row("F3", (s, d),
                        tuple((index[("mu", s, d, j, t)], 1) for j in range(W) for t in range(T)),
                        ">=", pd.blocks))
        rows.append(Row("F4", (s, d), tuple((index[("delta", s, d, j)], 1) for j in range(W)),
                        "<=", 1))
        for j in range(W):
            for t in range(T):
                mu = index[("mu", s, d, j, t)]
                xs = [index[("x", s, d, j, t, r)] for r in range(len(pd.paths))]
                rows.append(Row("F1", (s, d, j, t), tuple((x, 1) for x in xs) + ((mu, -1),), "==", 0))
                rows.append(Row("F4", (s, d, j, t), ((mu, 1), (index[("delta", s, d, j)], -1)),
                                "<=", 0))
                rx_terms[(d, j, t)].append((mu, 1))
                tx_terms[(s, j, t)].append((mu, 1))
                for r, path in enumerate(pd.paths):
                    for lid in path.link_ids:
                        cell_terms[(lid, j, t)].append((xs[r], 1))
                        link_terms[lid].append((xs[r], 1))
    for (lid, j, t), terms in cell_terms.items():
        rows.append(Row("F2", (lid, j, t), tuple(terms), "<=", 1))
    for lid, terms in link_terms.items():
        cap = link_block_capacity(topo.link_index[lid].total_gbps, plan)
        rows.append(Row("F2", (lid,), tuple(terms), "<=", cap))
    for key, terms in rx_terms.items():
        rows.append(Row("F5", key, tuple(terms), "<=", 1))
    for key, terms in tx_terms.items():
        rows.append(Row("F6", key, tuple(terms), "<=", 1))

    return IlpInstance(topo, plan, tuple(merged), tuple(pairs), tuple(variables),
                       tuple(upper), tuple(rows), objective)

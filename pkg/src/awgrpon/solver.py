"""Exact solution of block-grant instances.

Every constraint except demand satisfaction only gets harder as blocks are
added, so some optimal allocation grants each pair exactly ``ceil(V/c)``
blocks. The search therefore places exactly that many blocks per pair and
the objective of any leaf equals the counting bound: the first leaf proves
optimality, and exhausting the tree proves infeasibility.

Search order fixes which optimum is returned. Pairs are taken in canonical
order; within a pair the grant is the sequence of ``(wavelength, slot,
route)`` triples with slots increasing, and sequences are tried in
lexicographic order. The first feasible leaf is the lexicographically least
allocation. ``brute_force`` enumerates the same space with no propagation
and filters with ``check_allocation``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product

from .demand import DEFAULT_GRID, Demand, blocks_required
from .model import (
    Allocation,
    Grant,
    IlpInstance,
    ResourcePlan,
    build_instance,
    check_allocation,
    link_block_capacity,
    small_plan,
)
from .topology import natural_key

BRUTE_FORCE_CAP = 24


class SolverError(RuntimeError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE_BOUND_GAP = "FeasibleBoundGap"
    INFEASIBLE = "Infeasible"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class SolveLimits:
    time_budget: float | None = None
    node_budget: int | None = None

    def __post_init__(self) -> None:
        if self.time_budget is not None and not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if self.node_budget is not None and not self.node_budget > 0:
            raise ValueError("node_budget must be positive")


@dataclass(frozen=True)
class SolveStats:
    nodes: int = 0
    seconds: float = 0.0
    canonical: bool = True


@dataclass(frozen=True)
class SolveResult:
    status: Status
    objective: int | None
    lower_bound: int
    allocation: Allocation | None
    stats: SolveStats = field(default_factory=SolveStats, compare=False)
    certificate: str | None = None

    def granted_gbps(self, plan: ResourcePlan) -> Fraction | None:
        if self.allocation is None:
            return None
        return self.allocation.block_count * plan.block_gbps

    @property
    def gap(self) -> int | None:
        return None if self.objective is None else self.objective - self.lower_bound


def lower_bound(inst: IlpInstance) -> int:
    """Counting bound: every pair needs ``ceil(V/c)`` distinct blocks."""
    return inst.counting_bound


def infeasibility_certificate(inst: IlpInstance) -> str | None:
    """A reason no allocation exists, found without search, or None."""
    W, T = inst.plan.wavelengths, inst.plan.slots
    rx: dict[str, int] = {}
    tx: dict[str, int] = {}
    for p in inst.pairs:
        if p.blocks > T:
            return (f"{p.source}->{p.dest} needs {p.blocks} blocks but one wavelength "
                    f"holds {T} slots")
        if not any(p.usable):
            return f"{p.source}->{p.dest} has no path able to carry any planned wavelength"
        rx[p.dest] = rx.get(p.dest, 0) + p.blocks
        tx[p.source] = tx.get(p.source, 0) + p.blocks
    for d, n in sorted(rx.items(), key=lambda kv: natural_key(kv[0])):
        if n > W * T:
            return f"{d} must receive {n} blocks but has {W * T} (wavelength, slot) cells"
    for s, n in sorted(tx.items(), key=lambda kv: natural_key(kv[0])):
        if n > W * T:
            return f"{s} must send {n} blocks but has {W * T} (wavelength, slot) cells"
    return None


class _BudgetHit(Exception):
    pass


class _Search:
    def __init__(self, inst: IlpInstance, limits: SolveLimits) -> None:
        self.inst = inst
        self.W = inst.plan.wavelengths
        self.T = inst.plan.slots
        self.limits = limits
        self.pairs = inst.pairs
        self.paths = [[p.link_ids for p in pd.paths] for pd in inst.pairs]
        self.cap = {l.id: link_block_capacity(l.total_gbps, inst.plan)
                    for l in inst.topology.links}
        self.used = {lid: 0 for lid in self.cap}
        self.cells: set[tuple[str, int, int]] = set()
        self.rx: set[tuple[str, int, int]] = set()
        self.tx: set[tuple[str, int, int]] = set()
        self.chosen: list[tuple[int, int, int, int]] = []  # (pair index, j, t, route)
        self.nodes = 0
        # per wavelength: (items) -> fits; only placements on that wavelength invalidate it
        self.fit_memo: list[dict[tuple, bool]] = [{} for _ in range(self.W)]
        self.deadline = None
        if limits.time_budget is not None:
            self.deadline = time.perf_counter() + limits.time_budget

    def tick(self) -> None:
        self.nodes += 1
        if self.limits.node_budget is not None and self.nodes > self.limits.node_budget:
            raise _BudgetHit
        if self.deadline is not None and self.nodes % 256 == 0 and time.perf_counter() > self.deadline:
            raise _BudgetHit

    def route_free(self, links: tuple[str, ...], j: int, t: int) -> bool:
        return all((lid, j, t) not in self.cells and self.used[lid] < self.cap[lid] for lid in links)

    def completable(self, pi: int, j: int, need: int, t_min: int) -> bool:
        """Whether the partial grant extends to a full allocation.

        Pair ``pi`` still needs ``need`` slots >= ``t_min`` on wavelength ``j``;
        later pairs are unplaced. Pending pairs are given wavelengths one at a
        time and each wavelength's slot/route problem is solved on its own.
        Wavelengths interact only through per-link block totals, which this
        ignores, so the answer is exact when those totals cannot bind and
        optimistic otherwise.
        """
        W = self.W
        groups: list[list[tuple[int, int, int]]] = [[] for _ in range(W)]
        if need:
            groups[j].append((pi, need, t_min))
            if not self.wavelength_fits(j, tuple(groups[j])):
                return False
        rest = list(range(pi + 1, len(self.pairs)))
        options = {}
        for qi in rest:
            pd = self.pairs[qi]
            ok = [w for w in range(W) if pd.usable[w]
                  and self.wavelength_fits(w, ((qi, pd.blocks, 0),))]
            if not ok:
                return False
            options[qi] = ok
        rest.sort(key=lambda qi: (len(options[qi]), -self.pairs[qi].blocks, qi))
        failed: set[tuple] = set()

        def assign(k: int) -> bool:
            if k == len(rest):
                return True
            key = (k, tuple(frozenset(g) for g in groups))
            if key in failed:
                return False
            qi = rest[k]
            item = (qi, self.pairs[qi].blocks, 0)
            for w in options[qi]:
                groups[w].append(item)
                ok = (self.wavelength_fits(w, tuple(sorted(groups[w])))
                      and all(still_open(q, w) for q in rest[k + 1:])
                      and assign(k + 1))
                groups[w].pop()
                if ok:
                    return True
            failed.add(key)
            return False

        def still_open(qi: int, changed: int) -> bool:
            """Pair ``qi`` keeps some wavelength after wavelength ``changed`` gained a member."""
            item = (qi, self.pairs[qi].blocks, 0)
            return any(self.wavelength_fits(w, tuple(sorted(groups[w] + [item])))
                       for w in options[qi])

        return assign(0)

    def wavelength_fits(self, j: int, items: tuple[tuple[int, int, int], ...]) -> bool:
        """Slots and routes on wavelength ``j`` for (pair, blocks, first slot) items."""
        key = items
        memo = self.fit_memo[j]
        if key in memo:
            return memo[key]
        T = self.T
        taken: set[tuple] = set()  # (kind, name, t) claimed inside this check
        order = sorted(items, key=lambda it: (-it[1], it[0]))

        def open_routes(qi: int, t: int) -> list[tuple[str, ...]]:
            pd = self.pairs[qi]
            if (pd.dest, j, t) in self.rx or (pd.source, j, t) in self.tx:
                return []
            if ("rx", pd.dest, t) in taken or ("tx", pd.source, t) in taken:
                return []
            out = []
            for r in pd.usable[j]:
                links = self.paths[qi][r]
                if all((lid, j, t) not in self.cells and ("l", lid, t) not in taken
                       for lid in links):
                    out.append(links)
            return out

        def fill(k: int, left: int, t_from: int) -> bool:
            if k == len(order):
                return True
            qi, need, t_min = order[k]
            if left == 0:
                return fill(k + 1, order[k + 1][1] if k + 1 < len(order) else 0,
                            order[k + 1][2] if k + 1 < len(order) else 0)
            pd = self.pairs[qi]
            for t in range(max(t_from, t_min), T - left + 1):
                for links in open_routes(qi, t):
                    claim = [("rx", pd.dest, t), ("tx", pd.source, t)] + [("l", l, t) for l in links]
                    taken.update(claim)
                    ok = fill(k, left - 1, t + 1)
                    taken.difference_update(claim)
                    if ok:
                        return True
            return False

        result = self.counts_fit(j, items) and (fill(0, order[0][1], order[0][2]) if order else True)
        memo[key] = result
        return result

    def counts_fit(self, j: int, items: tuple[tuple[int, int, int], ...]) -> bool:
        """Counting test: endpoints and unavoidable links have enough free slots on ``j``."""
        demand: dict[tuple, int] = {}
        room: dict[tuple, set[int]] = {}
        for qi, need, t_min in items:
            pd = self.pairs[qi]
            routes = [set(self.paths[qi][r]) for r in pd.usable[j]]
            must = set.intersection(*routes) if routes else set()
            keys = [("rx", pd.dest), ("tx", pd.source)] + [("l", l) for l in must]
            for k in keys:
                demand[k] = demand.get(k, 0) + need
                if k not in room:
                    busy = self.rx if k[0] == "rx" else self.tx if k[0] == "tx" else self.cells
                    room[k] = {t for t in range(self.T) if (k[1], j, t) not in busy}
        return all(n <= len(room[k]) for k, n in demand.items())

    def place(self, pi: int, j: int, t: int, r: int) -> None:
        pd = self.pairs[pi]
        for lid in self.paths[pi][r]:
            self.cells.add((lid, j, t))
            self.used[lid] += 1
        self.rx.add((pd.dest, j, t))
        self.tx.add((pd.source, j, t))
        self.chosen.append((pi, j, t, r))
        self.fit_memo[j].clear()

    def unplace(self) -> None:
        pi, j, t, r = self.chosen.pop()
        pd = self.pairs[pi]
        for lid in self.paths[pi][r]:
            self.cells.discard((lid, j, t))
            self.used[lid] -= 1
        self.rx.discard((pd.dest, j, t))
        self.tx.discard((pd.source, j, t))
        self.fit_memo[j].clear()

    def pair(self, pi: int) -> bool:
        if pi == len(self.pairs):
            return True
        pd = self.pairs[pi]
        for j in range(self.W):
            if not pd.usable[j]:
                continue
            if not self.completable(pi, j, pd.blocks, 0):
                continue
            if self.block(pi, j, 0, 0):
                return True
        return False

    def block(self, pi: int, j: int, k: int, t_min: int) -> bool:
        pd = self.pairs[pi]
        if k == pd.blocks:
            return self.pair(pi + 1)
        for t in range(t_min, self.T - (pd.blocks - k) + 1):
            if (pd.dest, j, t) in self.rx or (pd.source, j, t) in self.tx:
                continue
            for r in pd.usable[j]:
                if not self.route_free(self.paths[pi][r], j, t):
                    continue
                self.tick()
                self.place(pi, j, t, r)
                if (self.completable(pi, j, pd.blocks - k - 1, t + 1)
                        and self.block(pi, j, k + 1, t + 1)):
                    return True
                self.unplace()
        return False

    def allocation(self) -> Allocation:
        grants = []
        for pi, j, t, r in self.chosen:
            pd = self.pairs[pi]
            grants.append(Grant(pd.source, pd.dest, j, t, self.paths[pi][r]))
        return Allocation(tuple(grants))


def solve_exact(inst: IlpInstance, limits: SolveLimits | None = None) -> SolveResult:
    limits = limits or SolveLimits()
    started = time.perf_counter()
    bound = lower_bound(inst)
    cert = infeasibility_certificate(inst)
    if cert is not None:
        return SolveResult(Status.INFEASIBLE, None, bound, None,
                           SolveStats(0, time.perf_counter() - started), cert)
    search = _Search(inst, limits)
    try:
        found = search.pair(0)
    except _BudgetHit:
        stats = SolveStats(search.nodes, time.perf_counter() - started)
        return SolveResult(Status.BUDGET_EXHAUSTED, None, bound, None, stats,
                           f"search stopped after {search.nodes} nodes without an incumbent")
    stats = SolveStats(search.nodes, time.perf_counter() - started)
    if not found:
        return SolveResult(Status.INFEASIBLE, None, bound, None, stats,
                           "search tree exhausted without a feasible grant")
    alloc = search.allocation()
    return SolveResult(Status.OPTIMAL, alloc.block_count, bound, alloc, stats)


def brute_force(inst: IlpInstance, cap: int = BRUTE_FORCE_CAP) -> SolveResult:
    """Enumerate grants of exactly ``ceil(V/c)`` blocks per pair, in tie-break order.

    Each pair's grant is built one ``(wavelength, slot, route)`` triple at a
    time in increasing ``(wavelength, slot)`` order; a partial allocation is
    abandoned as soon as ``check_allocation`` reports anything other than
    unmet demand.
    """
    if inst.mu_count > cap:
        raise SolverError(f"instance has {inst.mu_count} grant variables, cap is {cap}")
    started = time.perf_counter()
    topo, plan = inst.topology, inst.plan
    blocks = plan.blocks
    grants: list[Grant] = []
    nodes = 0

    def consistent(upto: int) -> bool:
        demands = inst.demands[: upto + 1]
        report = check_allocation(topo, demands, plan, Allocation(tuple(grants)))
        return all(v.family == "F3" for v in report.violations)

    def fill(pi: int, k: int, after: int) -> bool:
        nonlocal nodes
        if pi == len(inst.pairs):
            return True
        pd = inst.pairs[pi]
        if k == pd.blocks:
            return fill(pi + 1, 0, -1)
        for bi in range(after + 1, len(blocks)):
            j, t = blocks[bi]
            for path in pd.paths:
                nodes += 1
                grants.append(Grant(pd.source, pd.dest, j, t, path.link_ids))
                if consistent(pi) and fill(pi, k + 1, bi):
                    return True
                grants.pop()
        return False

    # pairs are merged and canonical, so instance demand i belongs to pair i
    assert [dm.pair for dm in inst.demands] == [p.pair for p in inst.pairs]
    bound = lower_bound(inst)
    if fill(0, 0, -1):
        alloc = Allocation(tuple(grants))
        report = check_allocation(topo, inst.demands, plan, alloc)
        if not report.ok:
            raise SolverError(f"brute force produced an invalid allocation: {report.violations}")
        return SolveResult(Status.OPTIMAL, alloc.block_count, bound, alloc,
                           SolveStats(nodes, time.perf_counter() - started))
    return SolveResult(Status.INFEASIBLE, None, bound, None,
                       SolveStats(nodes, time.perf_counter() - started),
                       "exhaustive enumeration found no feasible grant")


# -- oracle equivalence ---------------------------------------------------------

@dataclass(frozen=True)
class OracleMismatch:
    plan: str
    demands: tuple
    exact: SolveResult
    oracle: SolveResult


@dataclass
class OracleReport:
    cases: int = 0
    instances: int = 0
    mismatches: list[OracleMismatch] = field(default_factory=list)
    statuses: dict[str, int] = field(default_factory=dict)
    # exact allocations that failed check_allocation
    unsound: int = 0

    @property
    def agreed(self) -> bool:
        return not self.mismatches and not self.unsound


def oracle_equivalence(topo, wavelengths=(1, 2), slots=(1, 2), max_demands: int = 3,
                       grid=None, cap: int = BRUTE_FORCE_CAP,
                       trace: list | None = None) -> OracleReport:
    """Compare ``solve_exact`` against ``brute_force`` on every small instance.

    Cases are all sets of up to ``max_demands`` distinct rack pairs with every
    combination of grid volumes, for each (wavelengths, slots) plan. Volumes
    reach the program only through ``ceil(V/c)``, so cases sharing pairs and
    block counts are one instance and are solved once. ``trace``, if given,
    receives one ``(plan, demands, exact result)`` tuple per instance solved.
    """
    grid = tuple(grid or DEFAULT_GRID)
    report = OracleReport()
    pairs = topo.rack_pairs()
    for w in wavelengths:
        for t in slots:
            plan = small_plan(w, t)
            seen: set[tuple] = set()
            for k in range(max_demands + 1):
                for combo in combinations(pairs, k):
                    for vols in product(grid, repeat=k):
                        report.cases += 1
                        key = (combo, tuple(blocks_required(v, plan.block_gbps) for v in vols))
                        if key in seen:
                            continue
                        seen.add(key)
                        demands = [Demand(s, d, v) for (s, d), v in zip(combo, vols)]
                        inst = build_instance(topo, demands, plan)
                        if inst.mu_count > cap:
                            continue
                        report.instances += 1
                        exact = solve_exact(inst)
                        oracle = brute_force(inst, cap)
                        if trace is not None:
                            trace.append((plan, tuple(demands), exact))
                        if exact.allocation is not None and not check_allocation(
                                topo, demands, plan, exact.allocation).ok:
                            report.unsound += 1
                        report.statuses[exact.status.value] = report.statuses.get(exact.status.value, 0) + 1
                        if (exact.status, exact.objective, exact.allocation) != (
                                oracle.status, oracle.objective, oracle.allocation):
                            report.mismatches.append(
                                OracleMismatch(plan.name, tuple(demands), exact, oracle))
    return report

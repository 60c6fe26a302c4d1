"""Resource-utilisation sweeps comparing block plans (TDM vs WDM-only)."""

from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

from .demand import Demand, Scenario, as_fraction, generate_demands, with_volume
from .model import TDM, WDM, ResourcePlan, build_instance, check_allocation
from .solver import SolveLimits, Status, solve_exact
from .topology import Topology, topology_from_dict, topology_to_dict


class SweepError(ValueError):
    pass


class Axis(str, enum.Enum):
    VOLUME = "VolumePerDemand"
    COUNT = "DemandCount"


@dataclass(frozen=True)
class SweepSpec:
    scenario: Scenario
    axis: Axis
    values: tuple
    plans: tuple[ResourcePlan, ...] = (TDM, WDM)
    replications: int = 10
    # DemandCount axis: give every demand this volume instead of a grid draw
    fixed_volume: Fraction | None = None
    # VolumePerDemand axis: read the value as total volume split evenly over demands
    aggregate_volume: bool = False
    baseline: str = "wdm"

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", Axis(self.axis))
        object.__setattr__(self, "plans", tuple(self.plans))
        if self.axis == Axis.COUNT:
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        else:
            object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))
        if self.fixed_volume is not None:
            object.__setattr__(self, "fixed_volume", as_fraction(self.fixed_volume))

    def check(self) -> None:
        if not self.values:
            raise SweepError("sweep.values must be non-empty")
        if any(a >= b for a, b in zip(self.values, self.values[1:])):
            raise SweepError("sweep.values must be strictly increasing")
        if self.replications < 1:
            raise SweepError("sweep.replications must be >= 1")
        if not self.plans:
            raise SweepError("sweep needs at least one plan")
        if self.axis == Axis.COUNT and self.values[0] < 0:
            raise SweepError("sweep.values: demand counts must be >= 0")
        if self.axis == Axis.VOLUME and self.values[0] <= 0:
            raise SweepError("sweep.values: volumes must be positive")

    def seed(self, replication: int) -> int:
        return self.scenario.seed + replication


@dataclass(frozen=True)
class SweepRecord:
    axis_value: object
    plan: str
    replication: int
    seed: int
    status: Status
    blocks: int | None
    gbps: Fraction | None
    nodes: int


@dataclass(frozen=True)
class SweepRow:
    axis: Axis
    axis_value: object
    plan: str
    replications: int
    optimal: int
    infeasible: int
    exhausted: int
    mean_blocks: Fraction | None
    min_blocks: int | None
    max_blocks: int | None
    mean_gbps: Fraction | None
    savings_percent: Fraction | None = None


def savings_percent(tdm_gbps, wdm_gbps) -> Fraction:
    tdm, wdm = as_fraction(tdm_gbps), as_fraction(wdm_gbps)
    if wdm == 0:
        raise ZeroDivisionError("WDM granted capacity is zero")
    return 100 * (wdm - tdm) / wdm


def point_demands(topo: Topology, spec: SweepSpec, value, replication: int) -> list[Demand]:
    sc = replace(spec.scenario, seed=spec.seed(replication))
    if spec.axis == Axis.COUNT:
        demands = generate_demands(topo, replace(sc, demand_count=value))
        if spec.fixed_volume is not None:
            demands = with_volume(demands, spec.fixed_volume)
        return demands
    demands = generate_demands(topo, sc)
    volume = value / len(demands) if spec.aggregate_volume and demands else value
    return with_volume(demands, volume)


def _solve_point(topo: Topology, spec: SweepSpec, value, rep: int, plan: ResourcePlan,
                 limits: SolveLimits) -> SweepRecord:
    demands = point_demands(topo, spec, value, rep)
    result = solve_exact(build_instance(topo, demands, plan), limits)
    if result.allocation is not None:
        report = check_allocation(topo, demands, plan, result.allocation)
        if not report.ok:
            raise AssertionError(
                f"solver returned an invalid allocation at {value}/{plan.name}/rep {rep}: "
                + "; ".join(map(str, report.violations)))
    return SweepRecord(value, plan.name, rep, spec.seed(rep), result.status, result.objective,
                       result.granted_gbps(plan), result.stats.nodes)


def _solve_task(args) -> SweepRecord:
    topo_doc, spec, value, rep, plan, limits = args
    return _solve_point(topology_from_dict(topo_doc), spec, value, rep, plan, limits)


def run_records(topo: Topology, spec: SweepSpec, limits: SolveLimits | None = None,
                parallel: int = 1) -> list[SweepRecord]:
    """Solve and validate every (axis value, replication, plan) point, in canonical order."""
    spec.check()
    limits = limits or SolveLimits()
    tasks = [(v, rep, plan) for v in spec.values for rep in range(spec.replications)
             for plan in spec.plans]
    if parallel <= 1:
        return [_solve_point(topo, spec, v, rep, plan, limits) for v, rep, plan in tasks]
    doc = topology_to_dict(topo)
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_solve_task, [(doc, spec, v, rep, plan, limits)
                                           for v, rep, plan in tasks]))


def aggregate(spec: SweepSpec, records: Sequence[SweepRecord]) -> list[SweepRow]:
    rows = []
    by_point: dict[tuple, SweepRecord] = {(r.axis_value, r.plan, r.replication): r for r in records}
    for value in spec.values:
        for plan in spec.plans:
            recs = [by_point[(value, plan.name, rep)] for rep in range(spec.replications)]
            solved = [r for r in recs if r.status == Status.OPTIMAL]
            blocks = [r.blocks for r in solved]
            savings = None
            if plan.name != spec.baseline and any(p.name == spec.baseline for p in spec.plans):
                both = [(r, by_point[(value, spec.baseline, r.replication)]) for r in solved]
                both = [(r, b) for r, b in both if b.status == Status.OPTIMAL]
                if both:
                    mine = sum(r.gbps for r, _ in both) / len(both)
                    base = sum(b.gbps for _, b in both) / len(both)
                    savings = savings_percent(mine, base) if base else None
            rows.append(SweepRow(
                spec.axis, value, plan.name, len(recs),
                optimal=len(solved),
                infeasible=sum(r.status == Status.INFEASIBLE for r in recs),
                exhausted=sum(r.status in (Status.BUDGET_EXHAUSTED, Status.FEASIBLE_BOUND_GAP)
                              for r in recs),
                mean_blocks=Fraction(sum(blocks), len(blocks)) if blocks else None,
                min_blocks=min(blocks) if blocks else None,
                max_blocks=max(blocks) if blocks else None,
                mean_gbps=sum(r.gbps for r in solved) / len(solved) if solved else None,
                savings_percent=savings,
            ))
    return rows


def run_sweep(topo: Topology, spec: SweepSpec, limits: SolveLimits | None = None,
              parallel: int = 1) -> list[SweepRow]:
    return aggregate(spec, run_records(topo, spec, limits, parallel))


def first_failure(records: Iterable[SweepRecord], plan: str) -> dict[int, object]:
    """Per seed, the smallest axis value whose solve was not Optimal (None if all were)."""
    out: dict[int, object] = {}
    for r in sorted(records, key=lambda r: (r.seed, r.axis_value)):
        if r.plan != plan:
            continue
        out.setdefault(r.seed, None)
        if r.status != Status.OPTIMAL and out[r.seed] is None:
            out[r.seed] = r.axis_value
    return out


# -- output -------------------------------------------------------------------

ROW_HEADER = ["axis", "axis_value", "plan", "replications", "optimal", "infeasible", "exhausted",
              "mean_blocks", "min_blocks", "max_blocks", "mean_gbps", "savings_percent"]
RECORD_HEADER = ["axis_value", "plan", "replication", "seed", "status", "blocks", "gbps", "nodes"]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        return f"{float(x):.6f}".rstrip("0").rstrip(".")
    if isinstance(x, float):
        return fmt(Fraction(repr(x)))
    if isinstance(x, enum.Enum):
        return str(x.value)
    return str(x)


def _csv(header: list[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    return _csv(ROW_HEADER, ([r.axis, r.axis_value, r.plan, r.replications, r.optimal,
                              r.infeasible, r.exhausted, r.mean_blocks, r.min_blocks,
                              r.max_blocks, r.mean_gbps, r.savings_percent] for r in rows))


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    return _csv(RECORD_HEADER, ([r.axis_value, r.plan, r.replication, r.seed, r.status,
                                 r.blocks, r.gbps, r.nodes] for r in records))


def sweep_svg(rows: Sequence[SweepRow], title: str = "") -> str:
    """Line chart of mean granted Gbps per plan along the sweep axis."""
    width, height, pad = 560, 360, 56
    plans = list(dict.fromkeys(r.plan for r in rows))
    xs = list(dict.fromkeys(r.axis_value for r in rows))
    ys = [float(r.mean_gbps) for r in rows if r.mean_gbps is not None]
    ymax = max(ys, default=1.0) or 1.0
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]

    def px(i: int) -> float:
        return pad + (width - 2 * pad) * (i / max(len(xs) - 1, 1))

    def py(y: float) -> float:
        return height - pad - (height - 2 * pad) * (y / ymax)

    axis = rows[0].axis.value if rows else ""
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{title}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle">{axis}</text>',
           f'<text x="16" y="{height / 2:.1f}" transform="rotate(-90 16 {height / 2:.1f})" '
           f'text-anchor="middle">mean granted Gbps</text>']
    for i, x in enumerate(xs):
        out.append(f'<text x="{px(i):.1f}" y="{height - pad + 16}" text-anchor="middle">{fmt(x)}</text>')
    for k in range(5):
        y = ymax * k / 4
        out.append(f'<text x="{pad - 6}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.1f}</text>')
    for n, plan in enumerate(plans):
        colour = colours[n % len(colours)]
        pts = [(px(xs.index(r.axis_value)), py(float(r.mean_gbps)))
               for r in rows if r.plan == plan and r.mean_gbps is not None]
        if pts:
            coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}"/>')
            out.extend(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{colour}"/>' for x, y in pts)
        out.append(f'<text x="{width - pad + 4}" y="{pad + 16 * n}" fill="{colour}">{plan}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

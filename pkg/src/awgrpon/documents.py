"""JSON run configurations and allocation documents.

Both carry a versioned ``schema`` field. Parse errors raise ``SchemaError``
with the dotted path of the offending field, e.g. ``demands[0].source``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Any, Mapping

from .demand import DEFAULT_GRID, Demand, DemandError, Scenario, ScenarioKind, as_fraction, \
    blocks_required, merge_demands
from .experiments import Axis, SweepError, SweepSpec
from .model import Allocation, Grant, ModelError, ResourcePlan, check_plan, plan_by_name
from .solver import SolveLimits, Status
from .topology import PAPER_CELL, Topology, TopologyError, candidate_paths, load_preset, \
    topology_from_dict, validate_topology

CONFIG_SCHEMA = "awgrpon/config/v1"
ALLOCATION_SCHEMA = "awgrpon/allocation/v1"


class SchemaError(ValueError):
    pass


def dumps(doc: Mapping) -> str:
    return json.dumps(doc, indent=2) + "\n"


def num(x: Fraction | int | float | None):
    """JSON number for an exact value: int when integral, else float."""
    if x is None:
        return None
    x = as_fraction(x)
    return x.numerator if x.denominator == 1 else float(x)


def _get(doc: Mapping, key: str, where: str, kind=None, default: Any = ...):
    if not isinstance(doc, Mapping):
        raise SchemaError(f"{where}: expected an object")
    if key not in doc:
        if default is ...:
            raise SchemaError(f"{where}.{key}: missing")
        return default
    value = doc[key]
    if kind is not None and value is not None and not isinstance(value, kind):
        raise SchemaError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    if kind in (int, (int, float)) and isinstance(value, bool):
        raise SchemaError(f"{where}.{key}: expected a number")
    return value


def _fraction(value, where: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
        raise SchemaError(f"{where}: expected a number")
    try:
        return as_fraction(value)
    except (ValueError, ZeroDivisionError):
        raise SchemaError(f"{where}: not a number: {value!r}") from None


# -- plans and demands ------------------------------------------------------------

def plan_to_dict(plan: ResourcePlan) -> dict:
    return {"name": plan.name, "wavelengths": plan.wavelengths, "slots": plan.slots,
            "block_gbps": num(plan.block_gbps)}


def plan_from_dict(doc, where: str) -> ResourcePlan:
    if isinstance(doc, str):
        try:
            return plan_by_name(doc)
        except ModelError as exc:
            raise SchemaError(f"{where}: {exc}") from None
    try:
        return ResourcePlan(str(_get(doc, "name", where, str)),
                            _get(doc, "wavelengths", where, int),
                            _get(doc, "slots", where, int),
                            _fraction(_get(doc, "block_gbps", where), f"{where}.block_gbps"))
    except ModelError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def plans_from(value, where: str) -> tuple[ResourcePlan, ...]:
    if value == "both":
        return (plan_by_name("tdm"), plan_by_name("wdm"))
    if isinstance(value, (str, Mapping)):
        return (plan_from_dict(value, where),)
    if not isinstance(value, list) or not value:
        raise SchemaError(f"{where}: expected a plan name, 'both', or a non-empty list")
    plans = tuple(plan_from_dict(p, f"{where}[{i}]") for i, p in enumerate(value))
    names = [p.name for p in plans]
    if len(set(names)) != len(names):
        raise SchemaError(f"{where}: duplicate plan names {names}")
    return plans


def demand_from_dict(doc, where: str, topo: Topology) -> Demand:
    src = _get(doc, "source", where, str)
    dst = _get(doc, "dest", where, str)
    for key, rack in (("source", src), ("dest", dst)):
        if not topo.is_rack(rack):
            raise SchemaError(f"{where}.{key}: unknown rack {rack!r}")
    volume = _fraction(_get(doc, "volume_gbps", where), f"{where}.volume_gbps")
    try:
        return Demand(src, dst, volume)
    except DemandError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def demand_to_dict(dm: Demand) -> dict:
    return {"source": dm.source, "dest": dm.dest, "volume_gbps": num(dm.volume_gbps)}


# -- run configuration ------------------------------------------------------------

@dataclass(frozen=True)
class Outputs:
    allocation: str | None = None
    csv: str | None = None
    svg: str | None = None
    records: str | None = None


@dataclass(frozen=True)
class SweepSettings:
    axis: Axis = Axis.VOLUME
    values: tuple = tuple(DEFAULT_GRID)
    replications: int = 10
    fixed_volume: Fraction | None = None
    aggregate_volume: bool = False


@dataclass(frozen=True)
class RunConfig:
    topology: Topology
    plans: tuple[ResourcePlan, ...]
    scenario: Scenario | None
    demands: tuple[Demand, ...] | None
    limits: SolveLimits = field(default_factory=SolveLimits)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    outputs: Outputs = field(default_factory=Outputs)
    parallel: int = 1

    def sweep_spec(self) -> SweepSpec:
        if self.scenario is None:
            raise SchemaError("sweep: needs a 'scenario', not an explicit 'demands' list")
        s = self.sweep
        try:
            spec = SweepSpec(self.scenario, s.axis, s.values, self.plans, s.replications,
                             s.fixed_volume, s.aggregate_volume)
            spec.check()
        except SweepError as exc:
            raise SchemaError(str(exc)) from None
        return spec


DEFAULT_SCENARIO = Scenario(distinct_pairs=True)


def resolve_topology(value, base: FsPath) -> Topology:
    try:
        if isinstance(value, str):
            topo = load_preset(value)
        elif isinstance(value, Mapping) and "file" in value:
            path = base / str(value["file"])
            try:
                topo = topology_from_dict(json.loads(path.read_text("utf-8")))
            except OSError as exc:
                raise SchemaError(f"topology.file: cannot read {path}: {exc.strerror}") from None
        elif isinstance(value, Mapping):
            topo = topology_from_dict(value)
        else:
            raise SchemaError("topology: expected a preset name, {'file': path} or a document")
    except TopologyError as exc:
        raise SchemaError(str(exc) if str(exc).startswith("topology") else f"topology: {exc}") \
            from None
    issues = validate_topology(topo)
    if issues:
        raise SchemaError("topology: " + "; ".join(map(str, issues)))
    return topo


def scenario_from_dict(doc, where: str, topo: Topology) -> Scenario:
    known = {"kind", "demand_count", "volume_grid", "seed", "active_racks", "distinct_pairs"}
    extra = sorted(set(doc) - known) if isinstance(doc, Mapping) else []
    if extra:
        raise SchemaError(f"{where}.{extra[0]}: unknown field")
    try:
        kind = ScenarioKind(_get(doc, "kind", where, str, ScenarioKind.ALL_NODES.value))
    except ValueError:
        raise SchemaError(f"{where}.kind: expected AllNodes or SubsetActive") from None
    grid = _get(doc, "volume_grid", where, list, [num(v) for v in DEFAULT_GRID])
    sc = Scenario(
        kind,
        _get(doc, "demand_count", where, int, DEFAULT_SCENARIO.demand_count),
        tuple(_fraction(v, f"{where}.volume_grid[{i}]") for i, v in enumerate(grid)),
        _get(doc, "seed", where, int, DEFAULT_SCENARIO.seed),
        tuple(_get(doc, "active_racks", where, list, [])),
        _get(doc, "distinct_pairs", where, bool, DEFAULT_SCENARIO.distinct_pairs),
    )
    try:
        sc.check(topo)
    except DemandError as exc:
        raise SchemaError(str(exc)) from None
    return sc


def sweep_from_dict(doc, where: str) -> SweepSettings:
    try:
        axis = Axis(_get(doc, "axis", where, str, Axis.VOLUME.value))
    except ValueError:
        raise SchemaError(f"{where}.axis: expected VolumePerDemand or DemandCount") from None
    values = _get(doc, "values", where, list, None)
    if values is None:
        values = list(DEFAULT_GRID) if axis == Axis.VOLUME else list(range(1, 13))
    if axis == Axis.COUNT:
        if any(isinstance(v, bool) or not isinstance(v, int) for v in values):
            raise SchemaError(f"{where}.values: demand counts must be integers")
        values = tuple(values)
    else:
        values = tuple(_fraction(v, f"{where}.values[{i}]") for i, v in enumerate(values))
    fixed = _get(doc, "fixed_volume", where, default=None)
    return SweepSettings(
        axis, values,
        _get(doc, "replications", where, int, 10),
        None if fixed is None else _fraction(fixed, f"{where}.fixed_volume"),
        _get(doc, "aggregate_volume", where, bool, False),
    )


def config_from_dict(doc: Mapping, base: FsPath | str = ".") -> RunConfig:
    base = FsPath(base)
    if not isinstance(doc, Mapping):
        raise SchemaError("config: expected a JSON object")
    schema = doc.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise SchemaError(f"schema: unsupported {schema!r} (expected {CONFIG_SCHEMA!r})")
    known = {"schema", "topology", "plans", "scenario", "demands", "limits", "sweep", "output",
             "parallel"}
    extra = sorted(set(doc) - known)
    if extra:
        raise SchemaError(f"{extra[0]}: unknown field")
    topo = resolve_topology(doc.get("topology", PAPER_CELL), base)
    plans = plans_from(doc.get("plans", "tdm"), "plans")
    for i, plan in enumerate(plans):
        try:
            check_plan(topo, plan)
        except ModelError as exc:
            raise SchemaError(f"plans[{i}]: {exc}") from None

    if "scenario" in doc and "demands" in doc:
        raise SchemaError("demands: give exactly one of 'scenario' or 'demands'")
    scenario, demands = None, None
    if "demands" in doc:
        raw = _get(doc, "demands", "config", list)
        demands = tuple(demand_from_dict(d, f"demands[{i}]", topo) for i, d in enumerate(raw))
    else:
        scenario = scenario_from_dict(doc.get("scenario", {}), "scenario", topo)

    lim = doc.get("limits", {})
    try:
        tb = _get(lim, "time_budget", "limits", (int, float), None)
        limits = SolveLimits(None if tb is None else float(tb),
                             _get(lim, "node_budget", "limits", int, None))
    except ValueError as exc:
        raise SchemaError(f"limits: {exc}") from None
    out = doc.get("output", {})
    outputs = Outputs(*(_get(out, k, "output", str, None)
                        for k in ("allocation", "csv", "svg", "records")))
    parallel = _get(doc, "parallel", "config", int, 1)
    if parallel < 1:
        raise SchemaError("parallel: must be >= 1")
    return RunConfig(topo, plans, scenario, demands, limits,
                     sweep_from_dict(doc.get("sweep", {}), "sweep"), outputs, parallel)


def load_config(path: str | FsPath) -> RunConfig:
    path = FsPath(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise SchemaError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(doc, path.parent)


# -- allocation documents ------------------------------------------------------------

@dataclass(frozen=True)
class AllocationDoc:
    topology: str
    plan: ResourcePlan
    demands: tuple[Demand, ...]
    allocation: Allocation | None
    status: Status
    objective: int | None
    lower_bound: int | None
    certificate: str | None = None


def route_label(topo: Topology, g: Grant) -> str | None:
    try:
        for p in candidate_paths(topo, g.source, g.dest):
            if p.link_ids == g.path:
                return p.route_class.label
    except TopologyError:
        pass
    return None


def allocation_to_dict(topo: Topology, doc: AllocationDoc) -> dict:
    plan = doc.plan
    by_pair = doc.allocation.by_pair() if doc.allocation is not None else {}
    demands = []
    for dm in merge_demands(doc.demands):
        grants = by_pair.get(dm.pair, [])
        demands.append({
            **demand_to_dict(dm),
            "blocks_required": blocks_required(dm.volume_gbps, plan.block_gbps),
            "grants": [{"wavelength": g.wavelength, "slot": g.slot,
                        "route": route_label(topo, g), "path": list(g.path)} for g in grants],
        })
    granted = doc.allocation.block_count if doc.allocation is not None else None
    out = {
        "schema": ALLOCATION_SCHEMA,
        "topology": doc.topology,
        "plan": plan_to_dict(plan),
        "status": doc.status.value,
        "objective": doc.objective,
        "lower_bound": doc.lower_bound,
        "granted_blocks": granted,
        "granted_gbps": num(granted * plan.block_gbps) if granted is not None else None,
        "demands": demands,
    }
    if doc.certificate:
        out["certificate"] = doc.certificate
    return out


def allocation_from_dict(doc: Mapping, topo: Topology) -> AllocationDoc:
    where = "allocation"
    schema = _get(doc, "schema", where, str)
    if schema != ALLOCATION_SCHEMA:
        raise SchemaError(f"schema: unsupported {schema!r} (expected {ALLOCATION_SCHEMA!r})")
    plan = plan_from_dict(_get(doc, "plan", where), "plan")
    try:
        status = Status(_get(doc, "status", where, str))
    except ValueError:
        raise SchemaError(f"status: expected one of {[s.value for s in Status]}") from None
    demands, grants = [], []
    for i, d in enumerate(_get(doc, "demands", where, list)):
        at = f"demands[{i}]"
        dm = demand_from_dict(d, at, topo)
        demands.append(dm)
        for k, g in enumerate(_get(d, "grants", at, list, [])):
            gw = f"{at}.grants[{k}]"
            path = _get(g, "path", gw, list)
            if any(not isinstance(x, str) for x in path):
                raise SchemaError(f"{gw}.path: expected a list of link ids")
            grants.append(Grant(dm.source, dm.dest, _get(g, "wavelength", gw, int),
                                _get(g, "slot", gw, int), tuple(path)))
    allocation = Allocation(tuple(grants)) if grants or status == Status.OPTIMAL else None
    return AllocationDoc(
        str(_get(doc, "topology", where, str)), plan, tuple(demands), allocation, status,
        _get(doc, "objective", where, int, None), _get(doc, "lower_bound", where, int, None),
        _get(doc, "certificate", where, str, None))


def load_allocation(path: str | FsPath, topo: Topology | None = None) -> tuple[AllocationDoc, Topology]:
    """Parse an allocation file; without ``topo`` the document must name a preset."""
    path = FsPath(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise SchemaError(f"allocation: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"allocation: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if topo is None:
        name = _get(doc, "topology", "allocation", str)
        try:
            topo = load_preset(name)
        except TopologyError:
            raise SchemaError(f"topology: {name!r} is not a preset; pass --config") from None
    return allocation_from_dict(doc, topo), topo

"""Command-line front end: ``awgrpon solve|sweep|validate|oracle-check``.

Every flag can also be set through an environment variable named
``AWGRPON_<FLAG>`` (``AWGRPON_CONFIG``, ``AWGRPON_SEED``, ``AWGRPON_PLAN``,
``AWGRPON_OUT``, ``AWGRPON_SVG``, ``AWGRPON_TIME_LIMIT``,
``AWGRPON_PARALLEL``). Precedence is flag, then environment, then config
file.

Exit codes: 0 Optimal / valid, 1 usage or config error, 2 Infeasible,
3 BudgetExhausted.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .demand import Demand, DemandError, generate_demands, merge_demands
from .documents import (
    AllocationDoc,
    RunConfig,
    SchemaError,
    allocation_to_dict,
    config_from_dict,
    dumps,
    load_allocation,
    load_config,
    plans_from,
    route_label,
)
from .experiments import aggregate, first_failure, fmt, records_to_csv, rows_to_csv, run_records, \
    savings_percent, sweep_svg
from .model import ResourcePlan, build_instance, check_allocation
from .solver import BRUTE_FORCE_CAP, SolveResult, Status, oracle_equivalence, \
    solve_exact

ENV_PREFIX = "AWGRPON_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3


class UsageError(Exception):
    pass


def _env(name: str) -> str | None:
    value = os.environ.get(ENV_PREFIX + name)
    return value if value not in (None, "") else None


def _setting(args, attr: str, env: str, convert=str):
    value = getattr(args, attr, None)
    if value is not None:
        return value
    raw = _env(env)
    if raw is None:
        return None
    try:
        return convert(raw)
    except ValueError:
        raise UsageError(f"{ENV_PREFIX}{env}: invalid value {raw!r}") from None


def _flag(raw: str) -> bool:
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _demand_arg(text: str) -> Demand:
    try:
        s, d, v = text.split(":")
        return Demand(s, d, v)
    except (ValueError, DemandError) as exc:
        raise argparse.ArgumentTypeError(f"expected SRC:DST:GBPS, got {text!r} ({exc})")


def _status_code(statuses) -> int:
    statuses = set(statuses)
    if Status.BUDGET_EXHAUSTED in statuses or Status.FEASIBLE_BOUND_GAP in statuses:
        return EXIT_BUDGET
    if Status.INFEASIBLE in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def resolve_config(args) -> RunConfig:
    """Config file (or defaults) with environment and flag overrides applied."""
    path = _setting(args, "config", "CONFIG")
    cfg = load_config(path) if path else config_from_dict({})

    demands = getattr(args, "demand", None)
    if demands:
        for i, dm in enumerate(demands):
            for key in ("source", "dest"):
                rack = getattr(dm, key)
                if not cfg.topology.is_rack(rack):
                    raise SchemaError(f"--demand[{i}].{key}: unknown rack {rack!r}")
        cfg = replace(cfg, scenario=None, demands=tuple(demands))

    seed = _setting(args, "seed", "SEED", int)
    if seed is not None:
        if seed < 0:
            raise UsageError("--seed must be >= 0")
        if cfg.scenario is not None:
            cfg = replace(cfg, scenario=replace(cfg.scenario, seed=seed))
    plan = _setting(args, "plan", "PLAN")
    if plan is not None:
        if plan not in ("tdm", "wdm", "both"):
            raise UsageError(f"--plan must be tdm, wdm or both, got {plan!r}")
        cfg = replace(cfg, plans=plans_from(plan, "--plan"))
    limit = _setting(args, "time_limit", "TIME_LIMIT", float)
    if limit is not None:
        if not limit > 0:
            raise UsageError("--time-limit must be positive")
        cfg = replace(cfg, limits=replace(cfg.limits, time_budget=limit))
    parallel = _setting(args, "parallel", "PARALLEL", int)
    if parallel is not None:
        if parallel < 1:
            raise UsageError("--parallel must be >= 1")
        cfg = replace(cfg, parallel=parallel)
    return cfg


def _write(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _blocks(n: int) -> str:
    return f"{n} block" if n == 1 else f"{n} blocks"


def _plan_line(plan: ResourcePlan) -> str:
    w = "wavelength" if plan.wavelengths == 1 else "wavelengths"
    t = "slot" if plan.slots == 1 else "slots"
    return (f"plan {plan.name} ({plan.wavelengths} {w} x {plan.slots} {t} "
            f"x {fmt(plan.block_gbps)} Gbps)")


def solve_report(cfg: RunConfig, plan: ResourcePlan, demands: Sequence[Demand],
                 result: SolveResult) -> str:
    lines = [f"topology {cfg.topology.name}, {_plan_line(plan)}"]
    if result.status == Status.OPTIMAL:
        lines.append(f"status {result.status.value}: {_blocks(result.objective)}, "
                     f"{fmt(result.granted_gbps(plan))} Gbps "
                     f"(lower bound {_blocks(result.lower_bound)})")
    else:
        why = result.certificate or "no allocation exists"
        if result.status == Status.BUDGET_EXHAUSTED:
            why = "search budget exhausted before a proof"
        lines.append(f"status {result.status.value}: {why}")
    by_pair = result.allocation.by_pair() if result.allocation is not None else {}
    header = ("pair", "volume_gbps", "blocks", "wavelength", "slots", "routes")
    table = [header]
    for dm in merge_demands(demands):
        gs = by_pair.get(dm.pair, [])
        wls = sorted({g.wavelength for g in gs})
        routes = [route_label(cfg.topology, g) or "?" for g in gs]
        table.append((f"{dm.source}->{dm.dest}", fmt(dm.volume_gbps), str(len(gs)),
                       ",".join(map(str, wls)) or "-", ",".join(str(g.slot) for g in gs) or "-",
                       ",".join(routes) or "-"))
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _plan_path(out: str, plan: str, many: bool) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}.{plan}{p.suffix}") if many else p


def cmd_solve(args) -> int:
    cfg = resolve_config(args)
    if cfg.demands is not None:
        demands = list(cfg.demands)
    else:
        demands = generate_demands(cfg.topology, cfg.scenario)
    out = _setting(args, "out", "OUT") or cfg.outputs.allocation
    results = {}
    for plan in cfg.plans:
        inst = build_instance(cfg.topology, demands, plan)
        result = solve_exact(inst, cfg.limits)
        if result.allocation is not None:
            report = check_allocation(cfg.topology, demands, plan, result.allocation)
            if not report.ok:
                raise AssertionError("solver produced an invalid allocation: "
                                     + "; ".join(map(str, report.violations)))
        results[plan.name] = (plan, result)
        sys.stdout.write(solve_report(cfg, plan, demands, result))
        if out:
            doc = AllocationDoc(cfg.topology.name, plan, tuple(inst.demands), result.allocation,
                                result.status, result.objective, result.lower_bound,
                                result.certificate)
            _write(_plan_path(out, plan.name, len(cfg.plans) > 1),
                   dumps(allocation_to_dict(cfg.topology, doc)))
    if "tdm" in results and "wdm" in results:
        (tp, tr), (wp, wr) = results["tdm"], results["wdm"]
        if tr.status == wr.status == Status.OPTIMAL and wr.granted_gbps(wp):
            pct = savings_percent(tr.granted_gbps(tp), wr.granted_gbps(wp))
            sys.stdout.write(f"savings tdm vs wdm: {fmt(pct)}%\n")
    return _status_code(r.status for _, r in results.values())


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    spec = cfg.sweep_spec()
    out = _setting(args, "out", "OUT") or cfg.outputs.csv
    want_svg = bool(_setting(args, "svg", "SVG", _flag))
    svg_path = cfg.outputs.svg
    if want_svg and not svg_path:
        if not out:
            raise UsageError("--svg needs --out (the chart is written next to the CSV)")
        svg_path = str(Path(out).with_suffix(".svg"))
    records = run_records(cfg.topology, spec, cfg.limits, cfg.parallel)
    rows = aggregate(spec, records)
    text = rows_to_csv(rows)
    if out:
        _write(out, text)
        solved = sum(r.optimal for r in rows)
        total = sum(r.replications for r in rows)
        sys.stdout.write(f"{len(rows)} rows, {solved}/{total} points Optimal, wrote {out}\n")
        if spec.axis.value == "DemandCount":
            for plan in spec.plans:
                first = first_failure(records, plan.name)
                vals = [fmt(first[s]) if first[s] is not None else "none" for s in sorted(first)]
                sys.stdout.write(f"first non-optimal count per seed, {plan.name}: "
                                 f"{' '.join(vals)}\n")
    else:
        sys.stdout.write(text)
    if cfg.outputs.records:
        _write(cfg.outputs.records, records_to_csv(records))
    if svg_path:
        title = f"{spec.axis.value} sweep on {cfg.topology.name}"
        _write(svg_path, sweep_svg(rows, title))
    return _status_code(r.status for r in records)


def cmd_validate(args) -> int:
    topo = None
    if _setting(args, "config", "CONFIG"):
        topo = resolve_config(args).topology
    doc, topo = load_allocation(args.allocation, topo)
    if doc.allocation is None:
        sys.stdout.write(f"no allocation to check (status {doc.status.value})\n")
        return EXIT_INFEASIBLE if doc.status == Status.INFEASIBLE else EXIT_BUDGET
    report = check_allocation(topo, doc.demands, doc.plan, doc.allocation)
    if report.ok:
        sys.stdout.write(f"valid: {_blocks(doc.allocation.block_count)}, no violations\n")
        return EXIT_OK
    for v in report.violations:
        sys.stdout.write(f"[{v.family}] {v.indices}: {v.message}\n")
    noun = "violation" if len(report) == 1 else "violations"
    sys.stdout.write(f"invalid: {len(report)} {noun} "
                     f"({', '.join(sorted(report.families))})\n")
    return EXIT_INFEASIBLE


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be >= 1")
    return values


def cmd_oracle_check(args) -> int:
    cfg = resolve_config(args)
    report = oracle_equivalence(cfg.topology, args.wavelengths, args.slots, args.max_demands,
                                cfg.scenario.volume_grid if cfg.scenario else None, args.cap)
    statuses = ", ".join(f"{k} {v}" for k, v in sorted(report.statuses.items()))
    sys.stdout.write(f"{report.cases} cases, {report.instances} distinct instances ({statuses})\n")
    for m in report.mismatches:
        dems = ", ".join(f"{d.source}->{d.dest} {fmt(d.volume_gbps)}" for d in m.demands)
        sys.stdout.write(f"MISMATCH {m.plan} [{dems}]: exact {m.exact.status.value}/"
                         f"{m.exact.objective} vs oracle {m.oracle.status.value}/"
                         f"{m.oracle.objective}\n")
    if report.unsound:
        sys.stdout.write(f"{report.unsound} solver allocations failed check_allocation\n")
    sys.stdout.write("all instances agree\n" if report.agreed
                     else f"{len(report.mismatches)} mismatches\n")
    return EXIT_OK if report.agreed else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="scenario seed")
    common.add_argument("--plan", choices=("tdm", "wdm", "both"), help="block plan(s)")
    common.add_argument("--time-limit", type=float, metavar="SECONDS", help="per-solve time budget")
    common.add_argument("--parallel", type=int, metavar="N", help="worker processes (sweep)")

    parser = argparse.ArgumentParser(prog="awgrpon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one instance")
    p.add_argument("--out", metavar="PATH", help="write the allocation document here")
    p.add_argument("--demand", action="append", type=_demand_arg, metavar="SRC:DST:GBPS",
                   help="explicit demand (repeatable); replaces the scenario")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[common], help="run a volume or demand-count sweep")
    p.add_argument("--out", metavar="PATH", help="write the CSV here instead of stdout")
    p.add_argument("--svg", action="store_true", default=None,
                   help="also write an SVG chart next to the CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", parents=[common], help="check an allocation document")
    p.add_argument("allocation", metavar="ALLOCATION", help="allocation JSON document")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="compare the solver with brute force on small instances")
    p.add_argument("--wavelengths", type=_int_list, default=(1, 2), metavar="LIST")
    p.add_argument("--slots", type=_int_list, default=(1, 2), metavar="LIST")
    p.add_argument("--max-demands", type=int, default=3, metavar="K")
    p.add_argument("--cap", type=int, default=BRUTE_FORCE_CAP, metavar="N",
                   help="skip instances with more block variables than this")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (SchemaError, UsageError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

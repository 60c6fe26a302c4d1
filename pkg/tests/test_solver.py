from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from awgrpon.demand import Demand, Scenario, blocks_required, generate_demands
from awgrpon.model import TDM, WDM, Allocation, Grant, build_instance, check_allocation, small_plan
from awgrpon.solver import (
    SolveLimits, SolverError, Status, brute_force, lower_bound, oracle_equivalence, solve_exact,
)
from awgrpon.topology import RouteClass, candidate_paths


def both(inst):
    return solve_exact(inst), brute_force(inst)


def test_single_demand_one_gbps(cell):
    for plan, gbps in ((TDM, 2.5), (WDM, 10)):
        exact, oracle = both(build_instance(cell, [Demand("R1", "R2", 1)], plan))
        assert exact == oracle
        assert exact.status == Status.OPTIMAL and exact.objective == 1
        assert exact.granted_gbps(plan) == gbps


def test_single_demand_over_one_wavelength(cell):
    exact, oracle = both(build_instance(cell, [Demand("R1", "R2", 11)], TDM))
    assert exact.status == oracle.status == Status.INFEASIBLE
    assert "5 blocks" in exact.certificate


def test_brute_force_examples(cell):
    assert brute_force(build_instance(cell, [], TDM)).objective == 0
    two = [Demand("R1", "R3", 1), Demand("R2", "R3", 1)]
    one_wl = build_instance(cell, two, small_plan(1, 1))
    assert brute_force(one_wl).status == solve_exact(one_wl).status == Status.INFEASIBLE
    two_wl = build_instance(cell, two, small_plan(2, 1))
    res = brute_force(two_wl)
    assert res.objective == 2
    assert len({g.wavelength for g in res.allocation.grants}) == 2
    assert solve_exact(two_wl) == res


def test_brute_force_cap(cell):
    twelve = [Demand(s, d, 1) for s, d in cell.rack_pairs()]
    with pytest.raises(SolverError):
        brute_force(build_instance(cell, twelve, TDM))


def test_lower_bound_examples(cell):
    twelve = [Demand(s, d, 9) for s, d in cell.rack_pairs()]
    assert lower_bound(build_instance(cell, twelve, TDM)) == 48
    assert lower_bound(build_instance(cell, [], TDM)) == 0
    assert lower_bound(build_instance(cell, [Demand("R1", "R2", 1)], TDM)) == 1


def test_tie_break_prefers_low_wavelength_slot_then_route(cell):
    res = solve_exact(build_instance(cell, [Demand("R1", "R2", 3)], TDM))
    paths = candidate_paths(cell, "R1", "R2")
    # wavelength 0 is only reachable through the OLT from R1 to R2
    assert [(g.wavelength, g.slot, g.path) for g in res.allocation.grants] == [
        (0, 0, paths[2].link_ids), (0, 1, paths[2].link_ids)]
    res = solve_exact(build_instance(cell, [Demand("R1", "R2", 1)],
                                     small_plan(2, 1)))
    assert res.allocation.grants[0].wavelength == 0
    # on wavelength 1 the first direct mesh wins over the hairpin
    inst = build_instance(cell, [Demand("R1", "R2", 1), Demand("R3", "R4", 1)], small_plan(2, 1))
    res = solve_exact(inst)
    assert res == brute_force(inst)
    g = {x.pair: x for x in res.allocation.grants}
    assert g[("R3", "R4")].path == candidate_paths(cell, "R3", "R4")[
        RouteClass.DIRECT_A].link_ids


@pytest.mark.parametrize("volume", [1, 3, 5, 7, 9])
def test_single_demand_tightness(cell, volume):
    for plan in (TDM, WDM):
        for s, d in cell.rack_pairs():
            inst = build_instance(cell, [Demand(s, d, volume)], plan)
            res = solve_exact(inst)
            assert res.objective == blocks_required(volume, plan.block_gbps)
            assert res == brute_force(inst)


def _exhaustive_optimum(cell, demands, plan):
    """Minimum block count over every grant subset and path choice, no pruning."""
    blocks = [(s, d, j, t) for s, d in sorted({dm.pair for dm in demands})
              for j, t in plan.blocks]
    options = []
    for s, d, j, t in blocks:
        options.append([None] + [p.link_ids for p in candidate_paths(cell, s, d)])
    best = None
    for choice in product(*options):
        grants = tuple(Grant(s, d, j, t, path) for (s, d, j, t), path in zip(blocks, choice)
                       if path is not None)
        if best is not None and len(grants) >= best:
            continue
        if check_allocation(cell, demands, plan, Allocation(grants)).ok:
            best = len(grants)
    return best


@pytest.mark.parametrize("demands,w,t", [
    ([Demand("R1", "R2", 7)], 1, 3),
    ([Demand("R1", "R3", 1), Demand("R2", "R3", 1)], 1, 2),
    ([Demand("R1", "R3", 1), Demand("R2", "R3", 1)], 1, 1),
    ([Demand("R1", "R2", 5), Demand("R2", "R1", 1)], 2, 1),
    ([Demand("R1", "R2", 3), Demand("R3", "R4", 9)], 1, 2),
])
def test_minimal_grants_match_unrestricted_search(cell, demands, w, t):
    plan = small_plan(w, t)
    res = solve_exact(build_instance(cell, demands, plan))
    assert res.objective == _exhaustive_optimum(cell, demands, plan)


def test_budget_exhaustion_reports_bound(cell):
    demands = generate_demands(cell, Scenario(demand_count=12, seed=0, distinct_pairs=True))
    res = solve_exact(build_instance(cell, demands, TDM), SolveLimits(node_budget=3))
    assert res.status == Status.BUDGET_EXHAUSTED
    assert res.allocation is None and res.lower_bound > 0
    with pytest.raises(ValueError):
        SolveLimits(time_budget=0)


@pytest.mark.parametrize("seed", range(3))
def test_repeat_solves_identical_including_nodes(cell, seed):
    demands = generate_demands(cell, Scenario(demand_count=12, seed=seed, distinct_pairs=True))
    inst = build_instance(cell, demands, TDM)
    a, b = solve_exact(inst), solve_exact(inst)
    assert a == b and a.stats.nodes == b.stats.nodes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20), st.sampled_from([TDM, WDM]),
       st.booleans())
def test_sound_and_bounded(seed, count, plan, distinct):
    from awgrpon.topology import build_paper_cell
    cell = build_paper_cell()
    count = min(count, 12) if distinct else count
    demands = generate_demands(cell, Scenario(demand_count=count, seed=seed,
                                              distinct_pairs=distinct))
    res = solve_exact(build_instance(cell, demands, plan))
    assert res.status in (Status.OPTIMAL, Status.INFEASIBLE)
    if res.status == Status.OPTIMAL:
        assert check_allocation(cell, demands, plan, res.allocation).ok
        assert res.lower_bound <= res.objective


def test_oracle_equivalence_small_sweep(cell):
    report = oracle_equivalence(cell, wavelengths=(1, 2), slots=(1, 2), max_demands=2)
    assert report.instances > 0 and report.agreed
    assert set(report.statuses) == {"Optimal", "Infeasible"}

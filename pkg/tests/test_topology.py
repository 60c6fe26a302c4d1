import json
from dataclasses import replace
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from awgrpon.topology import (
    AwgrMap, Endpoint, Link, NodeKind, RouteClass, Topology, TopologyError, awgr_wavelength,
    build_paper_cell, candidate_paths, load_preset, load_topology, save_topology,
    topology_from_dict, topology_to_dict, validate_topology,
)


@pytest.mark.parametrize("i,o,n,w", [(0, 0, 4, 0), (3, 3, 4, 2), (1, 2, 4, 3)])
def test_awgr_wavelength_examples(i, o, n, w):
    assert awgr_wavelength(i, o, n) == w


@pytest.mark.parametrize("i,o,n", [(4, 0, 4), (0, -1, 4), (0, 0, 0)])
def test_awgr_wavelength_rejects_bad_ports(i, o, n):
    with pytest.raises(ValueError):
        awgr_wavelength(i, o, n)


@given(st.integers(1, 16))
def test_cyclic_map_is_bijective_both_ways(n):
    for i in range(n):
        assert {awgr_wavelength(i, o, n) for o in range(n)} == set(range(n))
        assert {awgr_wavelength(o, i, n) for o in range(n)} == set(range(n))
    assert AwgrMap(n).bijection_errors() == []


def test_paper_cell_shape(cell):
    assert cell.racks == ("R1", "R2", "R3", "R4")
    assert validate_topology(cell) == []
    olt = cell.link_index["AWGR-U>OLT"]
    assert olt.total_gbps == 40
    assert olt.total_gbps / 2.5 == 16


def _enumerate_paths(topo, s, d):
    """Every link sequence from s to d with no repeated node and no rack in the middle."""
    found = []
    by_src = {}
    for link in topo.links:
        by_src.setdefault(link.src.node, []).append(link)

    def walk(at, seen, acc):
        for link in by_src.get(at, []):
            nxt = link.dst.node
            if nxt in seen:
                continue
            if nxt == d:
                found.append(tuple(l.id for l in acc + [link]))
            elif topo.node_index[nxt].kind != NodeKind.RACK:
                walk(nxt, seen | {nxt}, acc + [link])

    walk(s, {s}, [])
    return sorted(found)


def test_every_pair_has_three_paths(cell):
    for s, d in cell.rack_pairs():
        paths = candidate_paths(cell, s, d)
        assert len(paths) == 3
        assert sorted(p.link_ids for p in paths) == _enumerate_paths(cell, s, d)
        assert [p.route_class for p in paths] == [
            RouteClass.DIRECT_A, RouteClass.DIRECT_B, RouteClass.VIA_OLT]


def test_path_wavelengths_r1_r2(cell):
    a, b, olt = candidate_paths(cell, "R1", "R2")
    assert a.forced_wavelengths == {1}   # (0 + 1) mod 4
    assert b.forced_wavelengths == {3}   # (0 + (1 + 2) mod 4) mod 4
    assert olt.forced_wavelengths == frozenset()
    assert all(olt.carries(j) for j in range(4))
    assert a.carries(1) and not a.carries(0)


def test_direct_meshes_use_different_wavelengths(cell):
    for s, d in cell.rack_pairs():
        a, b, _ = candidate_paths(cell, s, d)
        assert a.forced_wavelengths != b.forced_wavelengths


def test_paths_are_contiguous_and_loop_free(cell):
    for s, d in cell.rack_pairs():
        for p in candidate_paths(cell, s, d):
            assert p.links[0].src.node == s and p.links[-1].dst.node == d
            for x, y in zip(p.links, p.links[1:]):
                assert x.dst.node == y.src.node
            assert len(set(p.nodes)) == len(p.nodes)


@pytest.mark.parametrize("s,d", [("R1", "R1"), ("R1", "OLT"), ("AWGR-A", "R2"), ("R1", "R9")])
def test_candidate_paths_rejects_bad_endpoints(cell, s, d):
    with pytest.raises(TopologyError):
        candidate_paths(cell, s, d)


@given(st.randoms(use_true_random=False))
def test_paths_independent_of_insertion_order(rnd):
    ref = build_paper_cell()
    nodes, links = list(ref.nodes), list(ref.links)
    rnd.shuffle(nodes)
    rnd.shuffle(links)
    shuffled = Topology(ref.name, tuple(nodes), tuple(links), dict(ref.awgr_maps))
    for s, d in ref.rack_pairs():
        assert ([p.link_ids for p in candidate_paths(shuffled, s, d)]
                == [p.link_ids for p in candidate_paths(ref, s, d)])


def test_dangling_link_is_one_violation(cell):
    bad = Link("R1>NOWHERE", Endpoint("R1", 0), Endpoint("NOWHERE", 0), frozenset({0}), 10.0)
    topo = Topology("t", cell.nodes, cell.links + (bad,), dict(cell.awgr_maps))
    issues = validate_topology(topo)
    assert len(issues) == 1 and issues[0].subject == "R1>NOWHERE"


def test_duplicated_wavelength_per_input_is_one_violation(cell):
    table = [[(i + o) % 4 for o in range(4)] for i in range(4)]
    table[0][1] = table[0][0]
    maps = dict(cell.awgr_maps)
    maps["AWGR-A"] = AwgrMap(4, "table", tuple(map(tuple, table)))
    issues = validate_topology(Topology("t", cell.nodes, cell.links, maps))
    assert len(issues) == 1 and issues[0].subject == "AWGR-A"


def test_missing_map_and_port_range_are_reported(cell):
    maps = {k: v for k, v in cell.awgr_maps.items() if k != "AWGR-B"}
    issues = validate_topology(Topology("t", cell.nodes, cell.links, maps))
    assert [i.subject for i in issues] == ["AWGR-B"]
    links = tuple(replace(l, src=Endpoint("R1", 7)) if l.id == "R1>AWGR-A" else l
                  for l in cell.links)
    issues = validate_topology(Topology("t", cell.nodes, links, dict(cell.awgr_maps)))
    assert [i.subject for i in issues] == ["R1>AWGR-A"]


def test_json_round_trip(cell, tmp_path):
    doc = topology_to_dict(cell)
    again = topology_to_dict(topology_from_dict(json.loads(json.dumps(doc))))
    assert again == doc
    save_topology(cell, tmp_path / "t.json")
    assert topology_to_dict(load_topology(tmp_path / "t.json")) == doc


def test_preset_file_matches_builder(cell, tmp_path):
    shipped = resources.files("awgrpon.data").joinpath("paper_cell.json").read_text("utf-8")
    save_topology(cell, tmp_path / "t.json")
    assert shipped == (tmp_path / "t.json").read_text("utf-8")
    assert topology_to_dict(load_preset("paper-cell")) == topology_to_dict(cell)
    with pytest.raises(TopologyError):
        load_preset("nope")


def test_bad_document_names_field():
    doc = topology_to_dict(build_paper_cell())
    del doc["links"][0]["to"]
    with pytest.raises(TopologyError, match="'to'"):
        topology_from_dict(doc)
    with pytest.raises(TopologyError, match="schema"):
        topology_from_dict({"schema": "other/v9"})

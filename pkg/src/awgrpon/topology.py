"""PON cell topology: racks, AWGRs and the OLT as a wavelength-aware digraph.

Links connect (node, port) endpoints. A port of ``None`` marks a fibre
bundle that spans every port of the device on that side; the upper-tier
AWGRs reach the OLT through such a bundle, so a hop through them does not
pin the wavelength.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path as FsPath
from types import MappingProxyType
from typing import Iterable, Mapping

TOPOLOGY_SCHEMA = "awgrpon/topology/v1"
PAPER_CELL = "paper-cell"


class TopologyError(ValueError):
    pass


class NodeKind(str, enum.Enum):
    RACK = "Rack"
    LOWER_AWGR = "LowerAwgr"
    UPPER_AWGR = "UpperAwgr"
    OLT = "Olt"


AWGR_KINDS = (NodeKind.LOWER_AWGR, NodeKind.UPPER_AWGR)


class RouteClass(enum.IntEnum):
    # value order is the canonical tie-break order
    DIRECT_A = 0
    DIRECT_B = 1
    VIA_OLT = 2

    @property
    def label(self) -> str:
        return {0: "DirectAwgrA", 1: "DirectAwgrB", 2: "ViaOlt"}[self.value]

    @classmethod
    def from_label(cls, label: str) -> "RouteClass":
        for rc in cls:
            if rc.label == label:
                return rc
        raise ValueError(f"unknown route class {label!r}")


def natural_key(text: str) -> tuple:
    """Sort key that orders ``R2`` before ``R10``."""
    return tuple(int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", text))


def awgr_wavelength(i: int, o: int, n: int) -> int:
    """Wavelength index routed from input ``i`` to output ``o`` of a cyclic n x n AWGR."""
    if n < 1:
        raise ValueError(f"AWGR size must be positive, got {n}")
    if not (0 <= i < n and 0 <= o < n):
        raise ValueError(f"port out of range for {n}x{n} AWGR: input={i}, output={o}")
    return (i + o) % n


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    port_count: int


@dataclass(frozen=True)
class Endpoint:
    node: str
    port: int | None = None


@dataclass(frozen=True)
class Link:
    id: str
    src: Endpoint
    dst: Endpoint
    wavelengths: frozenset[int]
    capacity_gbps: float  # per wavelength

    @property
    def total_gbps(self) -> float:
        return self.capacity_gbps * len(self.wavelengths)


@dataclass(frozen=True)
class AwgrMap:
    size: int
    convention: str = "cyclic"
    table: tuple[tuple[int, ...], ...] | None = None

    def wavelength(self, i: int, o: int) -> int:
        if self.convention == "cyclic":
            return awgr_wavelength(i, o, self.size)
        if self.convention == "table" and self.table is not None:
            if not (0 <= i < self.size and 0 <= o < self.size):
                raise ValueError(f"port out of range for {self.size}x{self.size} AWGR")
            return self.table[i][o]
        raise ValueError(f"unsupported AWGR map convention {self.convention!r}")

    def bijection_errors(self) -> list[str]:
        """Inputs/outputs whose wavelength assignment is not a permutation."""
        n = self.size
        full = set(range(n))
        try:
            grid = [[self.wavelength(i, o) for o in range(n)] for i in range(n)]
        except (ValueError, IndexError, TypeError) as exc:
            return [str(exc)]
        bad = [f"input {i}" for i in range(n) if set(grid[i]) != full]
        bad += [f"output {o}" for o in range(n) if {grid[i][o] for i in range(n)} != full]
        return bad


@dataclass(frozen=True)
class Hop:
    """One traversal of an AWGR; ``wavelength`` is None when the hop is unconstrained."""

    awgr: str
    in_port: int | None
    out_port: int | None
    wavelength: int | None


@dataclass(frozen=True)
class Path:
    source: str
    dest: str
    links: tuple[Link, ...]
    route_class: RouteClass
    hops: tuple[Hop, ...]

    @property
    def link_ids(self) -> tuple[str, ...]:
        return tuple(link.id for link in self.links)

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.links[0].src.node,) + tuple(link.dst.node for link in self.links)

    @property
    def forced_wavelengths(self) -> frozenset[int]:
        return frozenset(h.wavelength for h in self.hops if h.wavelength is not None)

    def carries(self, wavelength: int) -> bool:
        """True if every AWGR hop admits ``wavelength`` and every link carries it."""
        if any(h.wavelength is not None and h.wavelength != wavelength for h in self.hops):
            return False
        return all(wavelength in link.wavelengths for link in self.links)


@dataclass(frozen=True)
class Issue:
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


@dataclass(frozen=True, eq=False)
class Topology:
    name: str
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    awgr_maps: Mapping[str, AwgrMap] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "awgr_maps", MappingProxyType(dict(self.awgr_maps)))

    @cached_property
    def node_index(self) -> Mapping[str, Node]:
        return MappingProxyType({n.id: n for n in self.nodes})

    @cached_property
    def link_index(self) -> Mapping[str, Link]:
        return MappingProxyType({l.id: l for l in self.links})

    @cached_property
    def racks(self) -> tuple[str, ...]:
        return tuple(sorted((n.id for n in self.nodes if n.kind == NodeKind.RACK), key=natural_key))

    @cached_property
    def lower_awgrs(self) -> tuple[str, ...]:
        ids = (n.id for n in self.nodes if n.kind == NodeKind.LOWER_AWGR)
        return tuple(sorted(ids, key=natural_key))

    @cached_property
    def _out_links(self) -> Mapping[str, tuple[Link, ...]]:
        out: dict[str, list[Link]] = {}
        for link in self.links:
            out.setdefault(link.src.node, []).append(link)
        return {k: tuple(sorted(v, key=lambda l: natural_key(l.id))) for k, v in out.items()}

    @cached_property
    def _path_cache(self) -> dict[tuple[str, str], tuple[Path, ...]]:
        return {}

    def node(self, node_id: str) -> Node:
        try:
            return self.node_index[node_id]
        except KeyError:
            raise TopologyError(f"unknown node {node_id!r}") from None

    def is_rack(self, node_id: str) -> bool:
        node = self.node_index.get(node_id)
        return node is not None and node.kind == NodeKind.RACK

    def rack_pairs(self, racks: Iterable[str] | None = None) -> list[tuple[str, str]]:
        chosen = sorted(set(self.racks if racks is None else racks), key=natural_key)
        return [(s, d) for s in chosen for d in chosen if s != d]

    def out_links(self, node_id: str) -> tuple[Link, ...]:
        return self._out_links.get(node_id, ())


def _hops(topo: Topology, links: tuple[Link, ...]) -> tuple[Hop, ...]:
    hops = []
    for inbound, outbound in zip(links, links[1:]):
        node = topo.node_index[inbound.dst.node]
        if node.kind not in AWGR_KINDS:
            continue
        i, o = inbound.dst.port, outbound.src.port
        amap = topo.awgr_maps.get(node.id)
        wl = None
        if amap is not None and i is not None and o is not None:
            wl = amap.wavelength(i, o)
        hops.append(Hop(node.id, i, o, wl))
    return tuple(hops)


def _route_class(topo: Topology, nodes: tuple[str, ...]) -> RouteClass:
    kinds = {topo.node_index[n].kind for n in nodes}
    if NodeKind.OLT in kinds:
        return RouteClass.VIA_OLT
    lowers = [n for n in nodes if topo.node_index[n].kind == NodeKind.LOWER_AWGR]
    if lowers and topo.lower_awgrs and lowers[0] == topo.lower_awgrs[0]:
        return RouteClass.DIRECT_A
    return RouteClass.DIRECT_B


def _search(topo: Topology, s: str, d: str) -> list[tuple[Link, ...]]:
    found: list[tuple[Link, ...]] = []
    stack: list[Link] = []
    seen = {s}

    def walk(at: str) -> None:
        for link in topo.out_links(at):
            nxt = link.dst.node
            if nxt in seen or nxt not in topo.node_index:
                continue
            stack.append(link)
            if nxt == d:
                found.append(tuple(stack))
            elif not topo.is_rack(nxt):
                seen.add(nxt)
                walk(nxt)
                seen.discard(nxt)
            stack.pop()

    walk(s)
    return found


def candidate_paths(topo: Topology, s: str, d: str) -> tuple[Path, ...]:
    """All loop-free rack-to-rack paths from ``s`` to ``d`` in canonical order.

    Racks are endpoints only and never relay. Paths are ordered by route class
    (DirectAwgrA, DirectAwgrB, ViaOlt) and then by link ids.
    """
    if s == d:
        raise TopologyError(f"self-demand {s!r} -> {d!r}")
    for end in (s, d):
        if not topo.is_rack(end):
            raise TopologyError(f"{end!r} is not a rack")
    cache = topo._path_cache
    if (s, d) not in cache:
        paths = []
        for links in _search(topo, s, d):
            p = Path(s, d, links, _route_class(topo, (s,) + tuple(l.dst.node for l in links)),
                     _hops(topo, links))
            paths.append(p)
        paths.sort(key=lambda p: (p.route_class, tuple(natural_key(i) for i in p.link_ids)))
        cache[(s, d)] = tuple(paths)
    return cache[(s, d)]


def validate_topology(topo: Topology) -> list[Issue]:
    issues: list[Issue] = []
    seen_nodes: set[str] = set()
    for node in topo.nodes:
        if node.id in seen_nodes:
            issues.append(Issue(node.id, "duplicate node id"))
        seen_nodes.add(node.id)
        if node.port_count < 1:
            issues.append(Issue(node.id, "port_count must be positive"))

    seen_links: set[str] = set()
    for link in topo.links:
        if link.id in seen_links:
            issues.append(Issue(link.id, "duplicate link id"))
        seen_links.add(link.id)
        for side, ep in (("from", link.src), ("to", link.dst)):
            node = topo.node_index.get(ep.node)
            if node is None:
                issues.append(Issue(link.id, f"{side} endpoint {ep.node!r} does not exist"))
            elif ep.port is not None and not 0 <= ep.port < node.port_count:
                issues.append(Issue(link.id, f"{side} port {ep.port} out of range for {ep.node}"))
        if not link.capacity_gbps > 0:
            issues.append(Issue(link.id, "capacity must be positive"))
        if not link.wavelengths:
            issues.append(Issue(link.id, "empty wavelength set"))

    for node in topo.nodes:
        if node.kind not in AWGR_KINDS:
            continue
        amap = topo.awgr_maps.get(node.id)
        if amap is None:
            issues.append(Issue(node.id, "AWGR has no routing map"))
            continue
        if amap.size != node.port_count:
            issues.append(Issue(node.id, f"map size {amap.size} != port count {node.port_count}"))
            continue
        bad = amap.bijection_errors()
        if bad:
            issues.append(Issue(node.id, "routing map is not a bijection at " + ", ".join(bad)))
    for awgr in topo.awgr_maps:
        node = topo.node_index.get(awgr)
        if node is None or node.kind not in AWGR_KINDS:
            issues.append(Issue(awgr, "routing map for a node that is not an AWGR"))

    if not issues:
        for s, d in topo.rack_pairs():
            if not candidate_paths(topo, s, d):
                issues.append(Issue(f"{s}->{d}", "no candidate path"))
    return issues


# -- presets -----------------------------------------------------------------

def build_paper_cell() -> Topology:
    """Four racks, two 4x4 direct AWGRs and an upper-tier AWGR pair to the OLT.

    Rack ``k`` (0-based) sits on input ``k`` of both lower AWGRs. AWGR-A
    delivers to rack ``k`` from output ``k``; AWGR-B is wired with outputs
    rotated by two, so the two direct meshes reach each pair on different
    wavelengths. The OLT side of each upper AWGR is a four-fibre bundle.
    """
    n = 4
    racks = [f"R{k + 1}" for k in range(n)]
    nodes = [Node(r, NodeKind.RACK, 3) for r in racks]
    nodes += [
        Node("AWGR-A", NodeKind.LOWER_AWGR, n),
        Node("AWGR-B", NodeKind.LOWER_AWGR, n),
        Node("AWGR-U", NodeKind.UPPER_AWGR, n),
        Node("AWGR-D", NodeKind.UPPER_AWGR, n),
        Node("OLT", NodeKind.OLT, n),
    ]
    wl = frozenset(range(n))
    rate = 10.0

    def link(a: str, ap: int | None, b: str, bp: int | None) -> Link:
        return Link(f"{a}>{b}", Endpoint(a, ap), Endpoint(b, bp), wl, rate)

    links = []
    for k, r in enumerate(racks):
        links.append(link(r, 0, "AWGR-A", k))
        links.append(link("AWGR-A", k, r, 0))
        links.append(link(r, 1, "AWGR-B", k))
        links.append(link("AWGR-B", (k + 2) % n, r, 1))
        links.append(link(r, 2, "AWGR-U", k))
        links.append(link("AWGR-D", k, r, 2))
    links.append(link("AWGR-U", None, "OLT", None))
    links.append(link("OLT", None, "AWGR-D", None))
    maps = {a: AwgrMap(n) for a in ("AWGR-A", "AWGR-B", "AWGR-U", "AWGR-D")}
    return Topology(PAPER_CELL, tuple(nodes), tuple(links), maps)


# -- JSON documents ----------------------------------------------------------

def topology_to_dict(topo: Topology) -> dict:
    def ep(e: Endpoint) -> dict:
        return {"node": e.node, "port": e.port}

    maps = {}
    for awgr in sorted(topo.awgr_maps, key=natural_key):
        m = topo.awgr_maps[awgr]
        entry: dict = {"size": m.size, "convention": m.convention}
        if m.table is not None:
            entry["table"] = [list(row) for row in m.table]
        maps[awgr] = entry
    return {
        "schema": TOPOLOGY_SCHEMA,
        "name": topo.name,
        "nodes": [{"id": n.id, "kind": n.kind.value, "ports": n.port_count} for n in topo.nodes],
        "links": [
            {
                "id": l.id,
                "from": ep(l.src),
                "to": ep(l.dst),
                "wavelengths": sorted(l.wavelengths),
                "capacity_gbps": l.capacity_gbps,
            }
            for l in topo.links
        ],
        "awgr_maps": maps,
    }


def topology_from_dict(doc: Mapping) -> Topology:
    schema = doc.get("schema", TOPOLOGY_SCHEMA)
    if schema != TOPOLOGY_SCHEMA:
        raise TopologyError(f"topology.schema: unsupported {schema!r}")
    try:
        nodes = tuple(
            Node(str(n["id"]), NodeKind(n["kind"]), int(n["ports"])) for n in doc["nodes"]
        )
        links = tuple(
            Link(
                str(l["id"]),
                Endpoint(str(l["from"]["node"]), l["from"].get("port")),
                Endpoint(str(l["to"]["node"]), l["to"].get("port")),
                frozenset(int(w) for w in l["wavelengths"]),
                float(l["capacity_gbps"]),
            )
            for l in doc["links"]
        )
        maps = {}
        for awgr, m in doc.get("awgr_maps", {}).items():
            table = m.get("table")
            maps[awgr] = AwgrMap(
                int(m["size"]),
                m.get("convention", "cyclic"),
                tuple(tuple(int(x) for x in row) for row in table) if table is not None else None,
            )
    except KeyError as exc:
        raise TopologyError(f"topology: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise TopologyError(f"topology: {exc}") from None
    return Topology(str(doc.get("name", "custom")), nodes, links, maps)


def load_topology(path: str | FsPath) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return topology_from_dict(json.load(fh))


def save_topology(topo: Topology, path: str | FsPath) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(topology_to_dict(topo), fh, indent=2)
        fh.write("\n")


def load_preset(name: str) -> Topology:
    if name != PAPER_CELL:
        raise TopologyError(f"unknown topology preset {name!r}")
    text = resources.files("awgrpon.data").joinpath("paper_cell.json").read_text("utf-8")
    return topology_from_dict(json.loads(text))

"""Device connectivity graphs, shortest paths and Alice/Bob placements.

Qubits are integer indices ``0 .. num_qubits - 1``. Every enumeration in this
module is returned in lexicographic order of qubit sequences so that reports
built on top of it are reproducible byte for byte.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FsPath
from typing import Iterable, Sequence

__all__ = [
    "TopologyError",
    "InvalidIndex",
    "NoPath",
    "AmbiguousPaths",
    "ConnectivityGraph",
    "Placement",
    "line_graph",
    "complete_graph",
    "load_device",
    "device_to_dict",
    "bfs_distances",
    "shortest_paths",
    "is_shortest_path",
    "enumerate_linear_subsets",
    "enumerate_placements",
    "enumerate_multipath_placements",
    "distance_of",
]


class TopologyError(ValueError):
    """Malformed device description or graph query."""


class InvalidIndex(TopologyError, IndexError):
    pass


class AmbiguousPaths(TopologyError):
    pass


class NoPath(TopologyError):
    """The two qubits live in different connected components."""


@dataclass(frozen=True)
class ConnectivityGraph:
    """Undirected coupling map.

    ``qubits`` restricts the graph to a subset of the indices (an induced
    subchip); it defaults to every qubit. Edges touching a qubit outside the
    subset are rejected, use :meth:`subgraph` to build restricted graphs.
    """

    num_qubits: int
    edges: frozenset[tuple[int, int]]
    name: str = ""
    qubits: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.num_qubits < 1:
            raise TopologyError(f"num_qubits must be positive, got {self.num_qubits}")
        norm = set()
        for e in self.edges:
            a, b = (int(x) for x in e)
            if a == b:
                raise TopologyError(f"self-loop on qubit {a}")
            for q in (a, b):
                if not 0 <= q < self.num_qubits:
                    raise InvalidIndex(f"edge ({a},{b}) out of range for {self.num_qubits} qubits")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        nodes = frozenset(range(self.num_qubits)) if self.qubits is None else frozenset(self.qubits)
        for q in nodes:
            if not 0 <= q < self.num_qubits:
                raise InvalidIndex(f"qubit {q} out of range for {self.num_qubits} qubits")
        for a, b in norm:
            if a not in nodes or b not in nodes:
                raise TopologyError(f"edge ({a},{b}) touches a qubit outside the active set")
        object.__setattr__(self, "qubits", nodes)

    @classmethod
    def from_edges(cls, num_qubits: int, edges: Iterable[Sequence[int]], name: str = "") -> "ConnectivityGraph":
        edges = [tuple(e) for e in edges]
        seen = set()
        for a, b in edges:
            key = (min(a, b), max(a, b))
            if key in seen:
                raise TopologyError(f"duplicate edge ({a},{b})")
            seen.add(key)
        return cls(num_qubits, frozenset(edges), name)

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {q: [] for q in self.qubits}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {q: tuple(sorted(v)) for q, v in adj.items()}

    @property
    def nodes(self) -> list[int]:
        return sorted(self.qubits)

    def neighbors(self, q: int) -> tuple[int, ...]:
        self._check(q)
        return self.adjacency[q]

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def is_complete(self) -> bool:
        n = len(self.qubits)
        return len(self.edges) == n * (n - 1) // 2

    def subgraph(self, keep: Iterable[int], name: str | None = None) -> "ConnectivityGraph":
        """Induced subgraph on ``keep``; qubit indices are preserved."""
        keep = frozenset(keep)
        for q in keep:
            self._check(q)
        edges = frozenset(e for e in self.edges if e[0] in keep and e[1] in keep)
        return ConnectivityGraph(self.num_qubits, edges, self.name if name is None else name, keep)

    def _check(self, q: int) -> None:
        if q not in self.qubits:
            raise InvalidIndex(f"qubit {q} is not part of graph {self.name!r}")


@dataclass(frozen=True)
class Placement:
    """Alice's block, Bob's block and the transfer path(s) between them.

    With a single transfer path (the default) the path runs from Alice's
    boundary qubit ``alice[-1]`` through Bob's whole block to ``bob[-1]``;
    every sent qubit follows it. With several paths, path ``j`` carries the
    ``j``-th transferred qubit of the protocol from its Alice location
    straight to its Bob target.
    """

    alice: tuple[int, ...]
    bob: tuple[int, ...]
    transfer_paths: tuple[tuple[int, ...], ...]
    distance: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alice", tuple(self.alice))
        object.__setattr__(self, "bob", tuple(self.bob))
        object.__setattr__(self, "transfer_paths", tuple(tuple(p) for p in self.transfer_paths))
        if not self.alice or not self.bob:
            raise TopologyError("alice and bob blocks must be non-empty")
        if set(self.alice) & set(self.bob):
            raise TopologyError(f"alice {self.alice} and bob {self.bob} overlap")
        if len(set(self.alice)) != len(self.alice) or len(set(self.bob)) != len(self.bob):
            raise TopologyError("repeated qubit inside a block")
        if not self.transfer_paths:
            raise TopologyError("placement needs at least one transfer path")
        for p in self.transfer_paths:
            if len(set(p)) != len(p) or len(p) < 2:
                raise TopologyError(f"invalid transfer path {p}")
        if self.is_single_path:
            path = self.transfer_paths[0]
            if path[0] != self.alice[-1] or tuple(path[-len(self.bob):]) != self.bob:
                raise TopologyError("single transfer path must run from alice[-1] through the bob block")
            if set(self.alice[:-1]) & set(path):
                raise TopologyError("transfer path re-enters alice's block")
        object.__setattr__(self, "distance", distance_of(self))

    @property
    def is_single_path(self) -> bool:
        return len(self.transfer_paths) == 1

    @property
    def line(self) -> tuple[int, ...]:
        """Alice block, intermediate ancillas and Bob block as one sequence."""
        if not self.is_single_path:
            raise TopologyError("multi-path placements have no single line")
        return self.alice[:-1] + self.transfer_paths[0]

    @property
    def qubits(self) -> tuple[int, ...]:
        """All qubits the placement touches, sorted."""
        s = set(self.alice) | set(self.bob)
        for p in self.transfer_paths:
            s.update(p)
        return tuple(sorted(s))

    @property
    def ancillas(self) -> tuple[int, ...]:
        """Every touched qubit outside Alice's block, in line order when available."""
        if self.is_single_path:
            return tuple(q for q in self.line if q not in self.alice)
        return tuple(q for q in self.qubits if q not in self.alice)

    def key(self) -> tuple:
        return (self.alice, self.bob, self.transfer_paths)

    def to_dict(self) -> dict:
        return {
            "alice": list(self.alice),
            "bob": list(self.bob),
            "paths": [list(p) for p in self.transfer_paths],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(tuple(d["alice"]), tuple(d["bob"]), tuple(tuple(p) for p in d["paths"]))

    @classmethod
    def from_line(cls, line: Sequence[int], n_a: int, n_b: int) -> "Placement":
        line = tuple(line)
        if len(line) < n_a + n_b:
            raise TopologyError(f"line of {len(line)} qubits cannot host [{n_a};{n_b}]")
        return cls(line[:n_a], line[len(line) - n_b:], (line[n_a - 1:],))


def distance_of(p: Placement) -> int:
    """Number of non-internal swaps needed to move one qubit from Alice to Bob.

    Counts the path qubits that belong to neither party and adds one; swaps
    inside either block are free.
    """
    parties = set(p.alice) | set(p.bob)
    return max(sum(1 for q in path if q not in parties) + 1 for path in p.transfer_paths)


def line_graph(n: int, name: str | None = None) -> ConnectivityGraph:
    return ConnectivityGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)], name or f"line-{n}")


def complete_graph(n: int, name: str | None = None) -> ConnectivityGraph:
    return ConnectivityGraph.from_edges(n, itertools.combinations(range(n), 2), name or f"complete-{n}")


def load_device(source: str | FsPath | dict) -> ConnectivityGraph:
    """Read a device description.

    Accepts ``{"name", "num_qubits", "edges": [[i, j], ...]}`` or the
    shorthand ``{"name", "num_qubits", "all_to_all": true}``.
    """
    if isinstance(source, dict):
        data = source
    else:
        with open(source) as fh:
            data = json.load(fh)
    if not isinstance(data, dict):
        raise TopologyError("device file must hold a JSON object")
    try:
        n = data["num_qubits"]
    except KeyError:
        raise TopologyError("device file is missing 'num_qubits'") from None
    if not isinstance(n, int) or isinstance(n, bool):
        raise TopologyError("'num_qubits' must be an integer")
    name = str(data.get("name", ""))
    if data.get("all_to_all"):
        return complete_graph(n, name or None)
    edges = data.get("edges")
    if not isinstance(edges, list):
        raise TopologyError("device file needs an 'edges' list or \"all_to_all\": true")
    for e in edges:
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
            raise TopologyError(f"malformed edge {e!r}")
    return ConnectivityGraph.from_edges(n, edges, name)


def device_to_dict(g: ConnectivityGraph) -> dict:
    return {"name": g.name, "num_qubits": g.num_qubits, "edges": [list(e) for e in sorted(g.edges)]}


def bfs_distances(g: ConnectivityGraph, src: int) -> dict[int, int]:
    g._check(src)
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _paths_towards(g: ConnectivityGraph, a: int, dist_to_b: dict[int, int]) -> list[tuple[int, ...]]:
    # walk strictly downhill in the BFS layering rooted at b; neighbours are
    # sorted so the output is already lexicographic
    out: list[tuple[int, ...]] = []
    stack = [(a,)]
    while stack:
        path = stack.pop()
        u = path[-1]
        d = dist_to_b[u]
        if d == 0:
            out.append(path)
            continue
        nxt = [v for v in g.adjacency[u] if dist_to_b.get(v) == d - 1]
        for v in reversed(nxt):
            stack.append(path + (v,))
    return out


def shortest_paths(g: ConnectivityGraph, a: int, b: int) -> list[tuple[int, ...]]:
    """All minimum-length paths from ``a`` to ``b`` in lexicographic order."""
    g._check(a)
    g._check(b)
    if a == b:
        raise TopologyError("endpoints must differ")
    dist = bfs_distances(g, b)
    if a not in dist:
        raise NoPath(f"qubits {a} and {b} are not connected in {g.name!r}")
    return _paths_towards(g, a, dist)


def is_shortest_path(g: ConnectivityGraph, path: Sequence[int]) -> bool:
    if len(path) < 2:
        return False
    for u, v in zip(path, path[1:]):
        if not g.has_edge(u, v):
            return False
    if len(set(path)) != len(path):
        return False
    return bfs_distances(g, path[0]).get(path[-1]) == len(path) - 1


def enumerate_linear_subsets(
    g: ConnectivityGraph, min_len: int = 2, start: int | None = None
) -> list[tuple[int, ...]]:
    """Every ordered shortest path with at least ``min_len`` qubits.

    Both directions of a path are listed, since the first qubit is Alice's
    side. ``start`` keeps only subsets whose first qubit is ``start``.
    """
    if min_len < 2:
        raise TopologyError("min_len must be at least 2")
    out: list[tuple[int, ...]] = []
    nodes = g.nodes
    dists = {b: bfs_distances(g, b) for b in nodes}
    for a in nodes if start is None else [start]:
        g._check(a)
        for b in nodes:
            if a == b or a not in dists[b]:
                continue
            if dists[b][a] + 1 < min_len:
                continue
            out.extend(_paths_towards(g, a, dists[b]))
    out.sort()
    return out


def _block_paths(g: ConnectivityGraph, size: int) -> list[tuple[int, ...]]:
    """Ordered simple paths with ``size`` qubits (line-shaped blocks)."""
    if size == 1:
        return [(q,) for q in g.nodes]
    out = []

    def grow(path: tuple[int, ...]) -> None:
        if len(path) == size:
            out.append(path)
            return
        for v in g.adjacency[path[-1]]:
            if v not in path:
                grow(path + (v,))

    for q in g.nodes:
        grow((q,))
    return out


def enumerate_placements(
    g: ConnectivityGraph, n_a: int, n_b: int, linear_only: bool = True, start: int | None = None
) -> list[Placement]:
    """All Alice/Bob placements of block sizes ``[n_a; n_b]``.

    ``linear_only`` puts Alice's block, the path and Bob's block on one
    shortest linear subset. Otherwise each block is any line-shaped
    substructure and only the connecting segment, from ``alice[-1]`` to
    ``bob[0]``, has to be a shortest path (its interior avoiding both blocks).
    ``start`` keeps placements whose first Alice qubit is ``start``.
    """
    if not n_a >= n_b >= 1:
        raise TopologyError(f"need n_A >= n_B >= 1, got [{n_a};{n_b}]")
    if linear_only:
        subsets = enumerate_linear_subsets(g, n_a + n_b, start)
        return [Placement.from_line(s, n_a, n_b) for s in subsets]

    out: set[Placement] = set()
    alices = [b for b in _block_paths(g, n_a) if start is None or b[0] == start]
    bobs = _block_paths(g, n_b)
    for al in alices:
        dist_from = None
        for bo in bobs:
            if set(al) & set(bo):
                continue
            if dist_from is None:
                dist_from = bfs_distances(g, al[-1])
            if bo[0] not in dist_from:
                continue
            blocked = set(al) | set(bo)
            for seg in shortest_paths(g, al[-1], bo[0]):
                if any(q in blocked for q in seg[1:-1]):
                    continue
                out.add(Placement(al, bo, (seg + bo[1:],)))
    return sorted(out, key=lambda p: (p.line, p.alice))


def enumerate_multipath_placements(
    g: ConnectivityGraph,
    n_a: int,
    n_b: int,
    transfers: Sequence[tuple[int, int]],
    start: int | None = None,
) -> list[Placement]:
    """Placements with one dedicated path per transferred qubit.

    ``transfers`` lists ``(alice_index, bob_index)`` for each sent qubit in
    protocol order. Each path must be the only shortest path between its
    two locations whose interior avoids both blocks; block orderings without
    such a path are skipped and a choice between several raises
    :class:`AmbiguousPaths`, since no rule picks one. On all-to-all devices
    every path is a single edge. Elsewhere build :class:`Placement` objects
    with explicit paths.
    """
    if not n_a >= n_b >= 1:
        raise TopologyError(f"need n_A >= n_B >= 1, got [{n_a};{n_b}]")
    out = []
    alices = [b for b in _block_paths(g, n_a) if start is None or b[0] == start]
    bobs = _block_paths(g, n_b)
    for al in alices:
        for bo in bobs:
            if set(al) & set(bo):
                continue
            blocked = set(al) | set(bo)
            paths = []
            for ia, ib in transfers:
                try:
                    cands = shortest_paths(g, al[ia], bo[ib])
                except NoPath:
                    cands = []
                cands = [c for c in cands if not any(q in blocked for q in c[1:-1])]
                if not cands:
                    break
                if len(cands) > 1:
                    raise AmbiguousPaths(
                        f"{len(cands)} shortest paths join {al[ia]} to {bo[ib]}; pass explicit transfer paths"
                    )
                paths.append(cands[0])
            else:
                out.append(Placement(al, bo, tuple(paths)))
    return out

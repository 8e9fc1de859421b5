from __future__ import annotations

import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpbench.fixtures import device, list_devices
from qpbench.topology import (
    AmbiguousPaths,
    ConnectivityGraph,
    InvalidIndex,
    NoPath,
    Placement,
    TopologyError,
    complete_graph,
    distance_of,
    enumerate_linear_subsets,
    enumerate_multipath_placements,
    enumerate_placements,
    is_shortest_path,
    line_graph,
    load_device,
    shortest_paths,
)


def _nx(g: ConnectivityGraph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(g.nodes)
    h.add_edges_from(g.edges)
    return h


@st.composite
def graphs(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return ConnectivityGraph.from_edges(n, chosen, "random")


# ---------------------------------------------------------------- graph basics


def test_rejects_self_loops_duplicates_and_bad_indices():
    with pytest.raises(TopologyError):
        ConnectivityGraph.from_edges(3, [(0, 0)])
    with pytest.raises(TopologyError):
        ConnectivityGraph.from_edges(3, [(0, 1), (1, 0)])
    with pytest.raises(InvalidIndex):
        ConnectivityGraph.from_edges(3, [(0, 3)])
    with pytest.raises(TopologyError):
        ConnectivityGraph(0, frozenset())


def test_load_device_variants(tmp_path):
    g = load_device({"name": "tri", "num_qubits": 3, "edges": [[0, 1], [1, 2]]})
    assert g.edges == {(0, 1), (1, 2)}
    k = load_device({"name": "k4", "num_qubits": 4, "all_to_all": True})
    assert k.is_complete() and len(k.edges) == 6
    for bad in ({"edges": []}, {"num_qubits": "3", "edges": []}, {"num_qubits": 3}, {"num_qubits": 3, "edges": [[0]]}):
        with pytest.raises(TopologyError):
            load_device(bad)
    p = tmp_path / "d.json"
    p.write_text('{"num_qubits": 2, "edges": [[0, 1]]}')
    assert load_device(p).has_edge(1, 0)


def test_shipped_topologies():
    expected = {"line6": (6, 5), "line8": (8, 7), "melbourne15": (15, 20), "kolkata27": (27, 28),
                "eagle127": (127, 144), "complete11": (11, 55), "complete25": (25, 300)}
    assert set(expected) <= set(list_devices())
    for name, (n, e) in expected.items():
        g = device(name)
        assert (g.num_qubits, len(g.edges)) == (n, e)
        h = _nx(g)
        assert nx.is_connected(h)
        if name.startswith(("melbourne", "kolkata", "eagle")):
            assert max(d for _, d in h.degree()) <= 3


def test_subgraph_keeps_indices():
    g = line_graph(5).subgraph([0, 1, 3, 4])
    assert g.nodes == [0, 1, 3, 4]
    assert g.edges == {(0, 1), (3, 4)}
    with pytest.raises(NoPath):
        shortest_paths(g, 0, 4)
    with pytest.raises(InvalidIndex):
        g.neighbors(2)


# ---------------------------------------------------------------- shortest paths


def test_shortest_paths_grid_square():
    g = ConnectivityGraph.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    assert shortest_paths(g, 0, 3) == [(0, 1, 3), (0, 2, 3)]


def test_shortest_paths_errors():
    g = ConnectivityGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(NoPath):
        shortest_paths(g, 0, 3)
    with pytest.raises(InvalidIndex):
        shortest_paths(g, 0, 9)
    with pytest.raises(TopologyError):
        shortest_paths(g, 1, 1)


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_shortest_paths_match_networkx(g):
    h = _nx(g)
    for a, b in itertools.permutations(g.nodes, 2):
        if not nx.has_path(h, a, b):
            with pytest.raises(NoPath):
                shortest_paths(g, a, b)
            continue
        ours = shortest_paths(g, a, b)
        ref = sorted(tuple(p) for p in nx.all_shortest_paths(h, a, b))
        assert ours == ref


@settings(max_examples=40, deadline=None)
@given(graphs(max_n=7))
def test_linear_subsets_are_all_shortest_paths(g):
    h = _nx(g)
    ref = []
    for a, b in itertools.permutations(g.nodes, 2):
        if nx.has_path(h, a, b):
            ref += [tuple(p) for p in nx.all_shortest_paths(h, a, b)]
    assert enumerate_linear_subsets(g) == sorted(ref)
    assert all(is_shortest_path(g, s) for s in enumerate_linear_subsets(g, 3))


# ---------------------------------------------------------------- placements


@pytest.mark.parametrize(
    "sizes, count",
    [((1, 1), 30), ((2, 2), 12), ((3, 3), 2), ((3, 2), 6), ((4, 2), 2), ((2, 1), 20), ((4, 3), 0)],
)
def test_placement_counts_on_six_line(sizes, count):
    assert len(enumerate_placements(line_graph(6), *sizes)) == count


def test_do_nothing_distances_on_six_line():
    ps = enumerate_placements(line_graph(6), 1, 1)
    hist = {}
    for p in ps:
        hist[p.distance] = hist.get(p.distance, 0) + 1
    assert hist == {1: 10, 2: 8, 3: 6, 4: 4, 5: 2}


def test_distance_ignores_internal_qubits():
    p = Placement.from_line(range(6), 4, 2)
    assert p.transfer_paths == ((3, 4, 5),)
    assert p.distance == 1
    q = Placement.from_line(range(6), 2, 2)
    assert (q.alice, q.bob, q.distance) == ((0, 1), (4, 5), 3)
    assert distance_of(Placement.from_line(range(6), 1, 1)) == 5


def test_placement_validation():
    with pytest.raises(TopologyError):
        Placement((0, 1), (1, 2), ((1, 2),))
    with pytest.raises(TopologyError):
        Placement((0,), (2,), ((1, 2),))
    p = Placement.from_line((3, 1, 4, 5), 1, 1)
    assert Placement.from_dict(p.to_dict()) == p
    assert p.ancillas == (1, 4, 5)


def test_start_filter():
    ps = enumerate_placements(device("kolkata27"), 1, 1, start=0)
    assert ps and all(p.alice[0] == 0 for p in ps)


def test_nonlinear_placements_contain_linear_ones():
    g = device("melbourne15")
    lin = set(enumerate_placements(g, 2, 2))
    gen = set(enumerate_placements(g, 2, 2, linear_only=False))
    assert lin <= gen and len(gen) > len(lin)
    for p in gen:
        seg = p.transfer_paths[0][: len(p.transfer_paths[0]) - len(p.bob) + 1]
        assert is_shortest_path(g, seg)


def test_complete_graph_distance_one():
    g = complete_graph(5)
    assert all(p.distance == 1 for p in enumerate_placements(g, 1, 1))
    assert enumerate_placements(g, 2, 1) == []  # no shortest line has 3 qubits
    ps = enumerate_multipath_placements(complete_graph(7), 4, 2, [(3, 1), (1, 0)], start=0)
    assert ps and all(p.distance == 1 and len(p.transfer_paths) == 2 for p in ps)


def test_multipath_refuses_to_choose():
    g = ConnectivityGraph.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    with pytest.raises(AmbiguousPaths):
        enumerate_multipath_placements(g, 1, 1, [(0, 0)], start=0)

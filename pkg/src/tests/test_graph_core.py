import numpy as np
import pytest

from services.errors import InvalidInputError
from services.graph_core import (
    Graph,
    connected_components,
    evolve_observed_graph,
    is_acyclic,
    neighbors,
    tree_path,
    union_graph,
)


def path_graph(n):
    return Graph(n, frozenset((i, i + 1) for i in range(n - 1)))


def random_graph(rng, n, p=0.3):
    return Graph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p))


# Graph construction

def test_edges_are_normalized_and_deduplicated():
    g = Graph(3, frozenset({(1, 0), (0, 1), (2, 1)}))
    assert g.edges == frozenset({(0, 1), (1, 2)})
    assert g.adjacency(1) == (0, 2)


def test_self_loop_rejected():
    with pytest.raises(InvalidInputError):
        Graph(3, frozenset({(1, 1)}))


def test_out_of_range_edge_rejected():
    with pytest.raises(InvalidInputError):
        Graph(3, frozenset({(0, 3)}))


def test_edge_list_parse_and_format():
    g = Graph.from_edge_list("# a path\n0 1\n\n2 1\n", 3)
    assert g.edges == frozenset({(0, 1), (1, 2)})
    assert g.to_edge_list() == "0 1\n1 2\n"


def test_edge_list_parse_error_names_line():
    with pytest.raises(InvalidInputError, match="line 2"):
        Graph.from_edge_list("0 1\n0 1 2\n", 3)


# union_graph

def test_union_of_edgeless_graphs():
    assert union_graph(Graph(3), Graph(3)).edges == frozenset()


def test_union_disjoint_and_duplicate_edges():
    g0 = Graph(3, frozenset({(0, 1)}))
    assert union_graph(g0, Graph(3, frozenset({(1, 2)}))).edges == {(0, 1), (1, 2)}
    assert union_graph(g0, Graph(3, frozenset({(0, 1), (1, 2)}))).edges == {(0, 1), (1, 2)}


def test_union_is_commutative_and_idempotent():
    g0 = Graph(4, frozenset({(0, 1), (2, 3)}))
    g1 = Graph(4, frozenset({(1, 2)}))
    assert union_graph(g0, g1) == union_graph(g1, g0)
    assert union_graph(g0, g0) == g0


def test_union_mismatched_sizes():
    with pytest.raises(InvalidInputError):
        union_graph(Graph(3), Graph(4))


# is_acyclic

def test_is_acyclic():
    assert is_acyclic(path_graph(3))
    assert not is_acyclic(Graph(3, frozenset({(0, 1), (1, 2), (0, 2)})))
    assert is_acyclic(Graph(5))


# neighbors

def test_neighbors():
    assert neighbors(path_graph(3), 1) == {0, 2}
    assert neighbors(Graph(4), 2) == frozenset()
    star = Graph(4, frozenset({(0, 1), (0, 2), (0, 3)}))
    assert neighbors(star, 0) == {1, 2, 3}


def test_neighbors_out_of_range():
    with pytest.raises(InvalidInputError):
        neighbors(path_graph(3), 3)


def test_neighbors_are_symmetric():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        g = random_graph(rng, n)
        for i in range(n):
            assert i not in neighbors(g, i)
            for j in neighbors(g, i):
                assert i in neighbors(g, j)


# evolve_observed_graph

def test_evolve_through_unobserved_interior():
    assert evolve_observed_graph(path_graph(3), [0, 2]).edges == {(0, 2)}


def test_evolve_keeps_direct_edge_only():
    assert evolve_observed_graph(path_graph(3), [0, 1]).edges == {(0, 1)}


def test_evolve_nothing_observed():
    assert evolve_observed_graph(path_graph(5), []).edges == frozenset()


def test_evolve_does_not_cross_observed_nodes():
    # 0 and 3 are separated by the observed nodes 1 and 2
    assert evolve_observed_graph(path_graph(4), [0, 1, 2, 3]).edges == {(0, 1), (1, 2), (2, 3)}


def test_evolve_with_everything_observed_is_identity():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        g = random_graph(rng, n)
        assert evolve_observed_graph(g, range(n)) == g


def test_evolve_through_unobserved_hub_can_close_a_cycle():
    star = Graph(4, frozenset({(0, 1), (1, 2), (1, 3)}))
    evolved = evolve_observed_graph(star, [0, 2, 3])
    assert evolved.edges == {(0, 2), (0, 3), (2, 3)}
    assert is_acyclic(star)
    assert not is_acyclic(evolved)


# helpers

def test_connected_components_and_tree_path():
    g = Graph(5, frozenset({(0, 1), (1, 2), (3, 4)}))
    labels = connected_components(g)
    assert labels[0] == labels[1] == labels[2]
    assert labels[3] == labels[4] != labels[0]
    assert tree_path(g, 0, 2) == [0, 1, 2]
    assert tree_path(g, 0, 4) is None

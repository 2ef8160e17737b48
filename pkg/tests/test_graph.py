import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_cliques, dense_selection, maximality_filter

from cliqueadmm.graph import (CliqueExplosion, CliqueFamily, Graph, GraphError, adjoint_select,
                              edge_cliques, enumerate_all_cliques, enumerate_maximal_cliques,
                              erdos_renyi, neighbor_set, position, read_graph, select,
                              selection_matrix, write_graph)

K3 = Graph.from_edges(3, [(1, 2), (2, 3), (1, 3)])
PATH = Graph.from_edges(3, [(1, 2), (2, 3)])


@st.composite
def graphs(draw, max_n=10):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph.from_edges(n, [e for e, k in zip(pairs, keep) if k])


def members(fam):
    return [c.members for c in fam]


class TestGraph:
    def test_edges_are_unordered(self):
        g = Graph.from_edges(3, [(2, 1), (1, 2), (3, 2)])
        assert g.sorted_edges() == [(1, 2), (2, 3)]
        assert g.adjacent(1, 2) and g.adjacent(2, 1)

    @pytest.mark.parametrize("edges", [[(1, 1)], [(0, 1)], [(1, 4)], [(1, 2, 3)]])
    def test_invalid_edges(self, edges):
        with pytest.raises(GraphError):
            Graph.from_edges(3, edges)

    def test_unknown_node(self):
        with pytest.raises(GraphError):
            neighbor_set(K3, 4)

    def test_connectivity(self):
        assert PATH.is_connected()
        assert not Graph.from_edges(3, [(1, 2)]).is_connected()

    def test_laplacian(self):
        L = PATH.laplacian()
        np.testing.assert_array_equal(L, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_erdos_renyi_deterministic_and_connected(self):
        a = erdos_renyi(15, 0.2, np.random.default_rng(4))
        b = erdos_renyi(15, 0.2, np.random.default_rng(4))
        assert a == b and a.is_connected()

    def test_erdos_renyi_rejects_bad_probability(self):
        with pytest.raises(GraphError):
            erdos_renyi(5, 0.0, np.random.default_rng(0))

    def test_erdos_renyi_gives_up(self):
        with pytest.raises(GraphError):
            erdos_renyi(30, 0.01, np.random.default_rng(0), max_tries=3)

    def test_file_round_trip(self, tmp_path):
        g = erdos_renyi(9, 0.4, np.random.default_rng(1))
        write_graph(g, tmp_path / "g.txt")
        assert read_graph(tmp_path / "g.txt") == g

    @pytest.mark.parametrize("text", ["", "3 2\n1 2\n", "3 1\n1 x\n", "3 1\n1 5\n"])
    def test_malformed_file(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(GraphError):
            read_graph(path)


class TestEnumeration:
    def test_triangle(self):
        assert len(enumerate_all_cliques(K3)) == 7
        assert members(enumerate_maximal_cliques(K3)) == [(1, 2, 3)]
        assert members(edge_cliques(K3)) == [(1, 2), (1, 3), (2, 3)]

    def test_path(self):
        assert members(enumerate_all_cliques(PATH)) == [(1,), (1, 2), (2,), (2, 3), (3,)]
        assert members(enumerate_maximal_cliques(PATH)) == [(1, 2), (2, 3)]

    def test_isolated_nodes_are_maximal(self):
        g = Graph.from_edges(3, [(1, 2)])
        assert members(enumerate_maximal_cliques(g)) == [(1, 2), (3,)]

    def test_edgeless_graph_has_no_edge_cliques(self):
        assert len(edge_cliques(Graph.from_edges(4, []))) == 0

    def test_brute_force_n10(self):
        g = erdos_renyi(10, 0.3, np.random.default_rng(7), connected=False)
        assert members(enumerate_all_cliques(g)) == brute_force_cliques(g)

    @settings(max_examples=60, deadline=None)
    @given(graphs(max_n=9))
    def test_against_brute_force(self, g):
        every = brute_force_cliques(g)
        assert members(enumerate_all_cliques(g)) == every
        assert members(enumerate_maximal_cliques(g)) == maximality_filter(every)
        assert len(edge_cliques(g)) == len(g.edges)

    def test_maximal_matches_filter_n12(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            g = erdos_renyi(12, 0.4, rng, connected=False)
            assert members(enumerate_maximal_cliques(g)) == maximality_filter(members(enumerate_all_cliques(g)))

    @settings(max_examples=60, deadline=None)
    @given(graphs(max_n=12))
    def test_closed_neighborhood_is_union_of_maximal_cliques(self, g):
        fam = enumerate_maximal_cliques(g)
        for i in g.nodes:
            union = set().union(*(fam[l].members for l in fam.cliques_of(i)))
            assert union == neighbor_set(g, i)

    def test_explosion_guard(self):
        # K16 has 2^16 - 1 cliques, above the default cap of 10 n |E| = 19200
        complete = Graph.from_edges(16, [(i, j) for i in range(1, 17) for j in range(i + 1, 17)])
        with pytest.raises(CliqueExplosion):
            enumerate_all_cliques(complete)
        with pytest.raises(CliqueExplosion):
            enumerate_all_cliques(K3, cap=6)
        assert len(enumerate_all_cliques(K3, cap=7)) == 7


class TestFamily:
    def test_rejects_non_cliques_and_duplicates(self):
        with pytest.raises(GraphError):
            CliqueFamily(PATH, [(1, 3)])
        with pytest.raises(GraphError):
            CliqueFamily(PATH, [(1, 2), (2, 1)])

    def test_ids_are_lexicographic(self):
        fam = CliqueFamily(K3, [(2, 3), (1, 2, 3), (1,)])
        assert members(fam) == [(1,), (1, 2, 3), (2, 3)]
        assert fam.cliques_of(2) == (1, 2)
        assert fam.count(1) == 2 and not CliqueFamily(K3, [(1, 2)]).covers_all_agents()

    def test_position(self):
        c = (2, 3, 5)
        assert [position(c, i) for i in c] == [1, 2, 3]
        assert position((7,), 7) == 1 and position((1, 4), 4) == 2
        with pytest.raises(GraphError):
            position(c, 4)


class TestSelection:
    def test_gather_and_scatter_examples(self):
        fam = edge_cliques(PATH)
        np.testing.assert_array_equal(select(fam, [1.0, 2.0, 3.0], 1), [1, 2, 2, 3])
        np.testing.assert_array_equal(adjoint_select(fam, [1.0, 2.0, 3.0, 4.0], 1).ravel(), [1, 5, 4])
        np.testing.assert_array_equal(adjoint_select(fam, np.zeros(4), 1), np.zeros((3, 1)))
        single = CliqueFamily(Graph.from_edges(1, []), [(1,)])
        np.testing.assert_array_equal(select(single, [5.0], 1), [5.0])

    def test_dense_matrix_rows(self):
        W = selection_matrix(edge_cliques(PATH), 1)
        np.testing.assert_array_equal(W, np.eye(3)[[0, 1, 1, 2]])

    def test_dimension_errors(self):
        fam = edge_cliques(PATH)
        with pytest.raises(GraphError):
            select(fam, np.zeros(4), 1)
        with pytest.raises(GraphError):
            adjoint_select(fam, np.zeros(3), 1)

    @settings(max_examples=80, deadline=None)
    @given(graphs(max_n=15), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
    def test_adjoint_identity_and_dense_oracle(self, g, d, seed):
        rng = np.random.default_rng(seed)
        fam = enumerate_maximal_cliques(g)
        W = dense_selection(fam, d)
        x = rng.standard_normal((g.n, d))
        v = rng.standard_normal(W.shape[0])
        assert abs(select(fam, x, d) @ v - np.sum(x * adjoint_select(fam, v, d))) <= 1e-12
        np.testing.assert_allclose(select(fam, x, d), W @ x.ravel(), atol=1e-12)
        np.testing.assert_allclose(adjoint_select(fam, v, d).ravel(), W.T @ v, atol=1e-12)
        np.testing.assert_array_equal(selection_matrix(fam, d), W)

    def test_round_trip_counts_memberships(self):
        g = erdos_renyi(10, 0.4, np.random.default_rng(3))
        fam = enumerate_maximal_cliques(g)
        x = np.random.default_rng(5).standard_normal((10, 2))
        counts = np.array([fam.count(i) for i in g.nodes])[:, None]
        np.testing.assert_allclose(adjoint_select(fam, select(fam, x, 2), 2), counts * x)

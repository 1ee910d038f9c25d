import networkx as nx
import pytest

from oracles import adjacency, lazy_measure, make_graph, named_graphs, ollivier_oracle, to_fingraph, w1_dual, w1_lp
from ricciflowrec.curvature import (
    CurvatureKind,
    curvature_map,
    forman_curvature,
    neighborhood_measure,
    ollivier_curvature,
    transport_cost,
    wasserstein1,
)
from ricciflowrec.errors import DataError


def path_graph(n):
    return make_graph([(f"n{i}", f"n{i + 1}", 1.0) for i in range(n - 1)])


class TestMeasure:
    def test_single_neighbor(self):
        m = neighborhood_measure(make_graph([("a", "b", 1.0)]), "a", 0.5)
        assert dict(m.masses) == {"a": 0.5, "b": 0.5}

    def test_weighted_split(self):
        g = make_graph([("a", "b", 2.0), ("a", "c", 1.0)])
        m = neighborhood_measure(g, "a", 0.0)
        assert m.masses["b"] == pytest.approx(2 / 3, abs=1e-15)
        assert m.masses["c"] == pytest.approx(1 / 3, abs=1e-15)
        assert "a" not in m.masses

    def test_lazy_equal_weights(self):
        g = make_graph([("s", "a", 1.0), ("s", "b", 1.0)])
        assert dict(neighborhood_measure(g, "s", 0.5).masses) == {"s": 0.5, "a": 0.25, "b": 0.25}

    def test_isolated_node_point_mass(self):
        g = make_graph([("a", "b", 1.0)], nodes=["a", "b", "z"])
        assert dict(neighborhood_measure(g, "z", 0.5).masses) == {"z": 1.0}

    def test_bad_p_idle(self):
        with pytest.raises(ValueError):
            neighborhood_measure(make_graph([("a", "b", 1.0)]), "a", 1.0)


class TestWasserstein:
    def test_identical(self):
        g = path_graph(4)
        assert wasserstein1({"n0": 0.5, "n1": 0.5}, {"n0": 0.5, "n1": 0.5}, g) == 0.0

    def test_adjacent_points(self):
        assert wasserstein1({"n0": 1.0}, {"n1": 1.0}, path_graph(4)) == 1.0

    def test_path_ends(self):
        assert wasserstein1({"n0": 1.0}, {"n3": 1.0}, path_graph(4)) == 3.0

    def test_disconnected_names_pair(self):
        g = make_graph([("a", "b", 1.0), ("c", "d", 1.0)])
        with pytest.raises(DataError, match="'a'.*'c'|'c'.*'a'"):
            wasserstein1({"a": 1.0}, {"c": 1.0}, g)

    def test_transport_cost_small_lp(self):
        # two suppliers, two consumers; optimum ships along the diagonal
        assert transport_cost([0.5, 0.5], [0.5, 0.5], [[1.0, 3.0], [3.0, 1.0]]) == 1.0
        assert transport_cost([1.0], [0.25, 0.75], [[2.0, 1.0]]) == 1.25


class TestOllivier:
    def test_single_edge_lazy(self):
        assert ollivier_curvature(make_graph([("a", "b", 1.0)]), ("a", "b"), 0.5) == 1.0

    def test_p5_center_edge(self):
        assert ollivier_curvature(path_graph(5), ("n1", "n2"), 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_star_leaf_matches_lp(self):
        g = nx.star_graph(3)
        g = nx.relabel_nodes(g, {n: f"n{n}" for n in g})
        nx.set_edge_attributes(g, 1.0, "weight")
        got = ollivier_curvature(to_fingraph(g), ("n0", "n1"), 0.0)
        assert got == pytest.approx(ollivier_oracle(g, "n0", "n1", 0.0, method="lp"), abs=1e-9)
        assert got == pytest.approx(ollivier_oracle(g, "n0", "n1", 0.0, method="dual"), abs=1e-9)

    @pytest.mark.parametrize("name", sorted(named_graphs()))
    def test_named_graphs_match_dual(self, name):
        g = named_graphs()[name]
        kmap = curvature_map(to_fingraph(g), "ollivier", 0.5)
        for (u, v), k in kmap.values.items():
            assert k == pytest.approx(ollivier_oracle(g, u, v, 0.5), abs=1e-9)

    def test_weighted_graph_matches_lp(self):
        g = nx.Graph()
        g.add_weighted_edges_from([("a", "b", 0.9), ("b", "c", 0.2), ("c", "a", 0.5), ("c", "d", 0.7),
                                   ("d", "e", 0.3), ("b", "e", 0.6)])
        kmap = curvature_map(to_fingraph(g), "ollivier", 0.3)
        for (u, v), k in kmap.values.items():
            assert k == pytest.approx(ollivier_oracle(g, u, v, 0.3, method="lp"), abs=1e-9)

    def test_dual_and_lp_oracles_agree(self):
        g = named_graphs()["grid2x3"]
        adj = adjacency(g)
        for u, v in g.edges():
            mu, nu = lazy_measure(adj, u, 0.2), lazy_measure(adj, v, 0.2)
            assert w1_dual(mu, nu, adj) == pytest.approx(w1_lp(mu, nu, adj), abs=1e-9)


class TestForman:
    def test_isolated_edge(self):
        assert forman_curvature(make_graph([("a", "b", 1.0)]), ("a", "b")) == 2.0

    def test_p3(self):
        assert forman_curvature(path_graph(3), ("n0", "n1")) == 1.0

    def test_c4(self):
        g = make_graph([("a", "b", 1.0), ("b", "c", 1.0), ("c", "d", 1.0), ("d", "a", 1.0)])
        assert forman_curvature(g, ("a", "b")) == 0.0

    def test_k3_map_zero(self):
        g = make_graph([("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0)])
        kmap = curvature_map(g, "forman")
        assert kmap.kind is CurvatureKind.FORMAN
        assert set(kmap.values.values()) == {0.0}

    def test_augmented_counts_triangles(self):
        g = make_graph([("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0)])
        assert forman_curvature(g, ("a", "b"), "augmented") == 3.0

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            forman_curvature(make_graph([("a", "b", 1.0)]), ("a", "b"), "3d")


class TestMap:
    def test_empty_graph(self):
        g = make_graph([], nodes=["a", "b"])
        assert len(curvature_map(g, "ollivier")) == 0
        assert len(curvature_map(g, "forman")) == 0

    def test_keys_equal_edge_set(self):
        g = to_fingraph(named_graphs()["barbell4"])
        kmap = curvature_map(g, "ollivier")
        assert set(kmap.values) == set(g.combined_weights)
        assert kmap[("n4", "n3")] == kmap.values[("n3", "n4")]

    def test_missing_edge(self):
        with pytest.raises(KeyError):
            ollivier_curvature(path_graph(3), ("n0", "n2"))

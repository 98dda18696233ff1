import io
import math
import warnings

import networkx as nx
import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from escapetime.errors import ConnectivityWarning, GraphParseError, ValidationError
from escapetime.graph import (
    Graph,
    is_strongly_connected,
    laplacian,
    laplacian_frobenius,
    load_graph,
    load_labels,
    nodes_unable_to_reach,
    row_sums,
    save_graph,
    symmetrize,
    transition_matrix,
    warn_if_not_strongly_connected,
)

from _graphs import cycle3, pair, random_strong


def test_load_pair():
    g = load_graph(io.StringIO("a b 1\nb a 1\n"))
    assert g.n == 2
    assert g.node_names == ("a", "b")
    np.testing.assert_array_equal(g.out_degree, [1.0, 1.0])


def test_load_cycle_default_weight():
    g = load_graph(io.StringIO("0 1\n1 2\n2 0\n"))
    np.testing.assert_array_equal(g.out_degree, [1.0, 1.0, 1.0])


def test_negative_weight_rejected():
    with pytest.raises(ValidationError, match="negative"):
        load_graph(io.StringIO("0 1 -2\n1 0 1\n"))


def test_malformed_line_reports_line_number():
    with pytest.raises(GraphParseError) as exc:
        load_graph(io.StringIO("0 1\n# comment\n1 2 3 4\n"))
    assert exc.value.lineno == 3
    with pytest.raises(GraphParseError, match="line 1"):
        load_graph(io.StringIO("0 1 heavy\n"))


def test_dangling_node_named():
    with pytest.raises(ValidationError, match="'sink'"):
        load_graph(io.StringIO("a sink 1\nb a 1\na b 1\n"))


def test_add_self_loops_admits_dangling():
    g = load_graph(io.StringIO("a sink 1\n"), add_self_loops=0.5)
    np.testing.assert_array_equal(g.out_degree, [1.5, 0.5])


def test_parallel_edges_summed_and_comments():
    g = load_graph(io.StringIO("# header\nx y 0.25\nx y 0.5  # dup\ny x\n"))
    assert g.num_edges == 2
    assert g.adjacency[0, 1] == 0.75


def test_zero_weight_edges_not_stored():
    g = load_graph(io.StringIO("0 1 0\n0 2 1\n1 0 1\n2 0 1\n"))
    assert g.num_edges == 3
    assert 0 not in g.adjacency.data


def test_matrix_market_input():
    A = sp.coo_matrix(np.array([[0, 2.0], [1.0, 0]]))
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, A)
    g = load_graph(io.StringIO(buf.getvalue().decode()))
    np.testing.assert_array_equal(g.adjacency.toarray(), A.toarray())


def test_node_indices_follow_first_appearance():
    g = load_graph(io.StringIO("z y\ny x\nx z\n"))
    assert g.node_names == ("z", "y", "x")
    assert g.index_of("x") == 2
    with pytest.raises(ValidationError):
        g.index_of("w")


def test_graph_is_read_only():
    g = pair()
    with pytest.raises(ValueError):
        g.adjacency.data[0] = 5.0
    with pytest.raises(ValueError):
        g.out_degree[0] = 5.0


def test_laplacian_examples():
    np.testing.assert_array_equal(laplacian(pair()).toarray(), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(laplacian(cycle3()).toarray(), [[1, -1, 0], [0, 1, -1], [-1, 0, 1]])


def test_frobenius_examples():
    assert laplacian_frobenius(pair()) == 2.0
    assert math.isclose(laplacian_frobenius(cycle3()), math.sqrt(6), rel_tol=1e-15)


def test_frobenius_matches_dense():
    g = random_strong(np.random.default_rng(3), 100, density=0.1)
    dense = np.linalg.norm(laplacian(g).toarray(), "fro")
    assert abs(laplacian_frobenius(g) - dense) <= 1e-12 * dense


def test_row_sums_left_to_right():
    A = sp.csr_matrix(np.array([[0.1, 0.2, 0.3], [1e16, 1.0, -1e16]]))
    expected = [(0.1 + 0.2) + 0.3, (1e16 + 1.0) + -1e16]
    np.testing.assert_array_equal(row_sums(A), expected)


def test_laplacian_rows_sum_to_zero_on_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = random_strong(rng, 20, density=0.2)
        # degrees are the row sums exactly, so L 1 = 0 up to matvec rounding
        assert np.array_equal(g.out_degree, row_sums(g.adjacency))
        L = laplacian(g)
        assert np.array_equal(L.diagonal(), g.out_degree)
        assert np.all(np.abs(L @ np.ones(g.n)) <= 8 * np.finfo(float).eps * g.out_degree)


def test_transition_matrix_is_row_stochastic():
    g = random_strong(np.random.default_rng(1), 30)
    np.testing.assert_allclose(transition_matrix(g) @ np.ones(g.n), 1.0, rtol=1e-14)


def test_strong_connectivity_examples():
    assert is_strongly_connected(cycle3())
    path = Graph.from_adjacency(sp.csr_matrix(np.array([[0, 1, 0], [0, 0, 1], [0, 0, 1.0]])))
    assert not is_strongly_connected(path)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 0.6), st.integers(0, 2**32 - 1))
def test_strong_connectivity_matches_networkx(n, p, seed):
    rng = np.random.default_rng(seed)
    A = (rng.random((n, n)) < p).astype(float)
    A[np.arange(n), rng.integers(n, size=n)] = 1.0  # no dangling nodes
    g = Graph.from_adjacency(sp.csr_matrix(A))
    G = nx.from_numpy_array(A, create_using=nx.DiGraph)
    assert is_strongly_connected(g) == nx.is_strongly_connected(G)


def test_nodes_unable_to_reach():
    # 0 <-> 1, 2 -> 0 and a self loop on 2: only 2 reaches 2
    g = Graph.from_adjacency(sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 0], [1, 0, 1.0]])))
    np.testing.assert_array_equal(nodes_unable_to_reach(g, np.array([False, False, True])), [0, 1])


def test_warning_for_non_strongly_connected():
    g = Graph.from_adjacency(sp.csr_matrix(np.array([[0, 1.0], [0, 1.0]])))
    with pytest.warns(ConnectivityWarning):
        assert warn_if_not_strongly_connected(g) is False
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert warn_if_not_strongly_connected(cycle3()) is True


def test_save_load_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    g = random_strong(rng, 40, density=0.2)
    path = tmp_path / "g.edges"
    save_graph(g, path)
    h = load_graph(path)
    perm = np.array([int(s) for s in h.node_names])
    A = g.adjacency.toarray()
    B = np.empty_like(A)
    B[np.ix_(perm, perm)] = h.adjacency.toarray()
    assert np.array_equal(A, B)


def test_symmetrize_idempotent():
    g = random_strong(np.random.default_rng(2), 25)
    s1 = symmetrize(g)
    s2 = symmetrize(s1)
    assert s1.is_symmetric()
    assert (s1.adjacency != s2.adjacency).nnz == 0
    np.testing.assert_array_equal(s1.adjacency.toarray(), (g.adjacency + g.adjacency.T).toarray() / 2)


def test_load_labels():
    table = load_labels(io.StringIO("a x\nb y\n# skip\na x\n"))
    assert table == {"a": "x", "b": "y"}
    with pytest.raises(ValidationError):
        load_labels(io.StringIO("a x\na y\n"))

import math
import os
import shutil

import numpy as np
import scipy.sparse as sp

from mlsvm.exceptions import GraphError, ValidationError
from mlsvm.knn_graph import AffinityGraph, build_knn_graph, dump_graph, edge_weight

TEST_DIR = "test_graph_data"


def _oracle_neighbors(x, k):
    """Plain-loop k nearest neighbours, ties by lower index."""
    result = []
    for i in range(x.shape[0]):
        d = np.linalg.norm(x - x[i], axis=1)
        others = [j for j in range(x.shape[0]) if j != i]
        others.sort(key=lambda j: (d[j], j))
        result.append(set(others[:k]))
    return result


def test_edge_weight():
    print("--- Testing Edge Weights ---")
    assert edge_weight([0.0, 0.0], [0.0, 2.0]) == 0.5
    assert edge_weight([1.0, 1.0], [1.0, 1.0]) == 1e10
    assert math.isclose(edge_weight([0.0], [0.1]), 10.0)
    print("[v] 1/d with a cap for identical points")


def test_small_graphs():
    print("--- Testing Small Graphs ---")
    line = build_knn_graph(np.array([[0.0], [1.0], [3.0]]), k=1)
    assert line.n_edges == 2
    assert line.adjacency[0, 1] == 1.0 and line.adjacency[1, 2] == 0.5
    assert line.adjacency[0, 2] == 0.0
    line.validate()
    print("[v] Collinear 0, 1, 3 with k=1 gives edges 0-1 and 1-2")

    pair = build_knn_graph(np.array([[0.0, 0.0], [3.0, 4.0]]), k=1)
    assert pair.n_edges == 1 and math.isclose(pair.adjacency[0, 1], 0.2)
    print("[v] Two points give one edge")

    dup = build_knn_graph(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), k=1)
    assert dup.adjacency[0, 1] == 1e10
    dup.validate()
    print("[v] Duplicate points get the capped weight")

    empty = AffinityGraph.edgeless(1)
    assert empty.n_nodes == 1 and empty.n_edges == 0
    empty.validate()
    print("[v] Edgeless one-node graph")


def test_exact_matches_oracle():
    print("--- Testing Exact Mode Against Brute Force ---")
    rng = np.random.default_rng(4)
    x = rng.normal(size=(60, 3))
    k = 5
    graph = build_knn_graph(x, k=k, mode="exact")
    graph.validate()

    oracle = _oracle_neighbors(x, k)
    expected = np.zeros((60, 60), dtype=bool)
    for i, nbrs in enumerate(oracle):
        for j in nbrs:
            expected[i, j] = expected[j, i] = True
    assert np.array_equal(graph.adjacency.toarray() > 0, expected)
    for i in range(60):
        cols, weights = graph.neighbors(i)
        assert len(cols) >= k
        for j, w in zip(cols, weights):
            assert math.isclose(w, 1.0 / np.linalg.norm(x[i] - x[j]), rel_tol=1e-9)
    print("[v] Union of exact k-NN lists with inverse-distance weights")

    auto = build_knn_graph(x, k=k, mode="auto")
    assert (auto.adjacency != graph.adjacency).nnz == 0
    print("[v] auto mode is exact for small inputs")

    sparse_input = build_knn_graph(sp.csr_matrix(x), k=k, mode="exact")
    assert (sparse_input.adjacency != graph.adjacency).nnz == 0
    print("[v] Sparse rows give the same graph")


def test_approximate_recall():
    print("--- Testing Approximate Mode ---")
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2000, 5))
    k = 10
    approx = build_knn_graph(x, k=k, mode="approximate", seed=1)
    approx.validate()
    exact = build_knn_graph(x, k=k, mode="exact")

    found = (approx.adjacency.multiply(exact.adjacency) > 0).nnz
    recall = found / exact.adjacency.nnz
    assert recall >= 0.9, recall
    for i in range(x.shape[0]):
        assert len(approx.neighbors(i)[0]) >= k
    print(f"[v] Recall {recall:.3f} against the exact graph")

    again = build_knn_graph(x, k=k, mode="approximate", seed=1)
    assert (again.adjacency != approx.adjacency).nnz == 0
    print("[v] Same seed, same graph")


def test_errors_and_dump():
    print("--- Testing Errors and Dump ---")
    for points, k in [(np.zeros((1, 2)), 1), (np.zeros((3, 2)), 3), (np.zeros((3, 2)), 0)]:
        try:
            build_knn_graph(points, k=k)
            raise AssertionError(f"accepted n={points.shape[0]} k={k}")
        except GraphError:
            pass
    print("[v] Too few points or bad k rejected")

    try:
        build_knn_graph(np.zeros((3, 2)), k=1, mode="fast")
        raise AssertionError("unknown mode accepted")
    except ValidationError:
        print("[v] Unknown mode rejected")

    if os.path.exists(TEST_DIR):
        shutil.rmtree(TEST_DIR)
    path = os.path.join(TEST_DIR, "graph.txt")
    dump_graph(build_knn_graph(np.array([[0.0], [1.0], [3.0]]), k=1), path)
    with open(path) as f:
        assert f.read().splitlines() == ["3 2", "0 1 1.0", "1 2 0.5"]
    print("[v] Dump lists n, m and one line per edge")
    shutil.rmtree(TEST_DIR)


if __name__ == "__main__":
    test_edge_weight()
    test_small_graphs()
    test_exact_matches_oracle()
    test_approximate_recall()
    test_errors_and_dump()
    print("--- Testing Complete ---")

import math
import os
import shutil

import numpy as np
import scipy.sparse as sp

from mlsvm.coarsening import (
    CoarseningConfig, InterpolationMatrix, Level, align_depths, build_hierarchy, build_interpolation,
    coarsen_level, copy_small_class_levels, dump_hierarchy, future_volumes, select_seeds,
)
from mlsvm.exceptions import InvariantError, ValidationError
from mlsvm.knn_graph import AffinityGraph, build_knn_graph

TEST_DIR = "test_coarsening_data"


def _graph(dense, volumes=None):
    dense = np.asarray(dense, dtype=float)
    n = dense.shape[0]
    return AffinityGraph(sp.csr_matrix(dense), np.ones(n) if volumes is None else np.asarray(volumes, float),
                         np.arange(n))


PATH3 = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
K4 = np.ones((4, 4)) - np.eye(4)


def test_future_volumes():
    print("--- Testing Future Volumes ---")
    assert np.allclose(future_volumes(_graph([[0, 1], [1, 0]])), [2.0, 2.0])
    assert np.allclose(future_volumes(_graph([[0, 0], [0, 0]])), [1.0, 1.0])
    assert np.allclose(future_volumes(_graph(PATH3)), [1.5, 3.0, 1.5])
    print("[v] Pair, isolated nodes and path a-b-c")

    only_ends = future_volumes(_graph(PATH3), in_f=np.array([True, False, True]))
    assert np.allclose(only_ends, [1.0, 3.0, 1.0])
    print("[v] Only F nodes contribute")


def test_select_seeds():
    print("--- Testing Seed Selection ---")
    assert list(select_seeds(_graph([[0.0]]))) == [0]
    assert list(select_seeds(_graph([[0, 1], [1, 0]]))) == [0]
    assert list(select_seeds(_graph(K4), q=0.5)) == [0, 1]
    print("[v] One node, a pair and K4")

    assert list(select_seeds(_graph(PATH3))) == [1]
    assert list(select_seeds(_graph([[0, 0], [0, 0]]))) == [0, 1]
    print("[v] Path center is the only seed; isolated nodes all become seeds")

    rng = np.random.default_rng(2)
    g = build_knn_graph(rng.normal(size=(300, 2)), k=6)
    q = 0.5
    seeds = select_seeds(g, q=q)
    is_seed = np.zeros(g.n_nodes, dtype=bool)
    is_seed[seeds] = True
    coupling = g.adjacency @ is_seed.astype(float)
    ratios = coupling[~is_seed] / g.degrees()[~is_seed]
    assert np.all(ratios > q)
    assert 0 < seeds.shape[0] < g.n_nodes
    print(f"[v] {seeds.shape[0]} seeds of 300; every F node is coupled above Q")

    for bad in [0.0, 1.0]:
        try:
            select_seeds(g, q=bad)
            raise AssertionError(f"accepted Q={bad}")
        except ValidationError:
            pass
    print("[v] Q outside (0, 1) rejected")


def test_interpolation():
    print("--- Testing Interpolation ---")
    star = _graph([[0, 3, 1], [3, 0, 0], [1, 0, 0]])
    p = build_interpolation(star, np.array([1, 2]), caliber=2)
    assert np.allclose(p.matrix.toarray(), [[0.75, 0.25], [1, 0], [0, 1]])
    p.validate(caliber=2)
    print("[v] Row (0.75, 0.25) for weights 3 and 1")

    p1 = build_interpolation(star, np.array([1, 2]), caliber=1)
    assert np.allclose(p1.matrix.toarray(), [[1, 0], [1, 0], [0, 1]])
    p1.validate(caliber=1)
    print("[v] Caliber 1 keeps the strongest seed")

    assert list(p.aggregate(0)) == [0, 1]
    assert list(p.aggregate(1)) == [0, 2]
    assert list(p.members([1])) == [0, 2]
    assert list(p.members([])) == []
    print("[v] Aggregates include fractional members")

    try:
        build_interpolation(_graph([[0, 1, 0], [1, 0, 0], [0, 0, 0]]), np.array([0]), caliber=2)
        raise AssertionError("node without seed neighbour accepted")
    except InvariantError as e:
        print(f"[v] Uncovered node rejected: {e}")

    bad = InterpolationMatrix(sp.csr_matrix(np.array([[0.5, 0.4], [0.0, 1.0]])), np.array([1]))
    try:
        bad.validate()
        raise AssertionError("row sum 0.9 accepted")
    except InvariantError:
        print("[v] Row sums are checked")


def test_coarsen_level():
    print("--- Testing Galerkin Coarse Level ---")
    fine = Level(_graph(PATH3), np.array([[0.0], [1.0], [2.0]]), 0)
    p = InterpolationMatrix(sp.csr_matrix(np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])), np.array([0, 2]))
    coarse = coarsen_level(fine, p)
    assert coarse.graph.adjacency.toarray().tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert np.allclose(coarse.volumes, [1.5, 1.5])
    assert coarse.level_index == 1 and coarse.interpolation is p
    coarse.graph.validate()
    print("[v] Path a-b-c with C={a, c} gives one coarse edge of weight 1")

    pair = Level(_graph([[0, 1], [1, 0]]), np.array([[0.0, 0.0], [2.0, 0.0]]), 0)
    merged = coarsen_level(pair, InterpolationMatrix(sp.csr_matrix(np.array([[1.0], [1.0]])), np.array([0])))
    assert np.allclose(merged.points, [[1.0, 0.0]])
    assert np.allclose(merged.volumes, [2.0])
    assert merged.graph.n_edges == 0
    print("[v] Two unit nodes merge into centroid (1, 0) with volume 2")

    rng = np.random.default_rng(3)
    x = rng.normal(size=(8, 2))
    g = build_knn_graph(x, k=3)
    same = coarsen_level(Level(g, x, 0), InterpolationMatrix.identity(8))
    assert (same.graph.adjacency != g.adjacency).nnz == 0
    assert np.allclose(same.points, x) and np.array_equal(same.volumes, g.volumes)
    print("[v] Identity P is a fixpoint")


def test_coarse_weights_oracle():
    print("--- Testing Coarse Weights Against Triple Sum ---")
    rng = np.random.default_rng(7)
    x = rng.normal(size=(25, 2))
    g = build_knn_graph(x, k=4, volumes=rng.uniform(0.5, 2.0, size=25))
    seeds = select_seeds(g)
    p = build_interpolation(g, seeds, caliber=2)
    coarse = coarsen_level(Level(g, x, 0), p)

    w = g.adjacency.toarray()
    pm = p.matrix.toarray()
    wc = coarse.graph.adjacency.toarray()
    n_c = pm.shape[1]
    for i in range(n_c):
        for j in range(n_c):
            if i == j:
                assert wc[i, j] == 0.0
                continue
            total = sum(pm[k, i] * w[k, l] * pm[l, j] for k in range(25) for l in range(25) if k != l)
            expected = total if total >= 1e-12 else 0.0
            assert math.isclose(wc[i, j], expected, rel_tol=1e-9, abs_tol=1e-12), (i, j, wc[i, j], expected)
    assert math.isclose(coarse.volumes.sum(), g.volumes.sum(), rel_tol=1e-12)
    coarse.graph.validate()
    print(f"[v] {n_c} coarse nodes match the triple sum; volume conserved")


def test_hierarchy():
    print("--- Testing Hierarchy Build ---")
    rng = np.random.default_rng(11)
    x = rng.normal(size=(1500, 2))
    cfg = CoarseningConfig(stop_size=100, k=10)
    g0 = build_knn_graph(x, k=cfg.k)
    h = build_hierarchy(g0, x, cfg, label=-1)

    sizes = h.sizes()
    assert h.depth >= 2
    assert all(a > b for a, b in zip(sizes, sizes[1:])), sizes
    assert h.coarsest.n_nodes <= 100 or h.stalled
    for total in h.total_volumes():
        assert math.isclose(total, 1500.0, rel_tol=1e-9)
    for level in h.levels[1:]:
        level.interpolation.validate(caliber=cfg.caliber)
        level.graph.validate()
        assert level.interpolation.n_fine == h.levels[level.level_index - 1].n_nodes
    print(f"[v] Sizes {sizes}: strictly decreasing, volume 1500 at every level")

    algebraic = build_hierarchy(g0, x, CoarseningConfig(stop_size=100, coarse_edges="algebraic"), label=-1)
    for level, total in zip(algebraic.levels, algebraic.total_volumes()):
        level.graph.validate()
        assert math.isclose(total, 1500.0, rel_tol=1e-9)
    print(f"[v] Algebraic coarse edges: sizes {algebraic.sizes()}")

    capped = build_hierarchy(g0, x, CoarseningConfig(stop_size=10, max_levels=2))
    assert capped.depth == 2
    print("[v] max_levels bounds the depth")

    small = build_hierarchy(g0, x, CoarseningConfig(stop_size=2000))
    assert small.depth == 1 and small.coarsest.graph is g0
    print("[v] A class at or below stop_size is its own coarsest level")

    try:
        CoarseningConfig(caliber=11).validate()
        raise AssertionError("caliber 11 accepted")
    except ValidationError:
        print("[v] Caliber outside 1..10 rejected")


def test_padding():
    print("--- Testing Depth Alignment ---")
    rng = np.random.default_rng(1)
    x_small = rng.normal(size=(30, 2))
    small = build_hierarchy(build_knn_graph(x_small, k=5), x_small, CoarseningConfig(stop_size=50), label=1)
    padded = copy_small_class_levels(small, 3)
    assert padded.depth == 3
    for i, level in enumerate(padded.levels):
        assert level.level_index == i
    for level in padded.levels[1:]:
        assert level.copied and level.graph is small.coarsest.graph
        assert np.allclose(level.interpolation.matrix.toarray(), np.eye(30))
    print("[v] Copied levels carry identity P")

    try:
        copy_small_class_levels(padded, 2)
        raise AssertionError("shrinking accepted")
    except ValidationError:
        print("[v] Target shallower than the hierarchy rejected")

    x_big = rng.normal(size=(400, 2))
    big = build_hierarchy(build_knn_graph(x_big, k=8), x_big, CoarseningConfig(stop_size=60), label=-1)
    a, b = align_depths(small, big)
    assert a.depth == b.depth == big.depth
    print(f"[v] Both classes now have depth {a.depth}")

    if os.path.exists(TEST_DIR):
        shutil.rmtree(TEST_DIR)
    path = os.path.join(TEST_DIR, "h.txt")
    dump_hierarchy(a, path)
    with open(path) as f:
        text = f.read()
    assert text.startswith("label = +1\ndepth = ")
    assert "copied = true" in text
    print("[v] Hierarchy dump written")
    shutil.rmtree(TEST_DIR)


if __name__ == "__main__":
    test_future_volumes()
    test_select_seeds()
    test_interpolation()
    test_coarsen_level()
    test_coarse_weights_oracle()
    test_hierarchy()
    test_padding()
    print("--- Testing Complete ---")

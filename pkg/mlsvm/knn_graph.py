"""
Affinity graphs over training points
Exact brute-force or approximate (random-projection forest + neighbour refinement) k-NN
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .exceptions import GraphError, InvariantError, ValidationError
from .storage import atomic_write_text

logger = logging.getLogger(__name__)

EPS_DIST = 1e-10
EXACT_LIMIT = 20000
KNN_MODES = ("exact", "approximate", "auto")


@dataclass(frozen=True)
class AffinityGraph:
    """Undirected weighted graph over data rows.

    Attributes:
        adjacency (sp.csr_matrix): Symmetric n x n weights, zero diagonal.
        volumes (np.ndarray): Positive per-node volumes.
        point_refs (np.ndarray): Row of the source point set each node stands for.
    """
    adjacency: sp.csr_matrix
    volumes: np.ndarray
    point_refs: np.ndarray

    @classmethod
    def edgeless(cls, n_nodes: int, volumes: Optional[np.ndarray] = None) -> "AffinityGraph":
        """Graph without edges, used for one-point classes."""
        volumes = np.ones(n_nodes) if volumes is None else np.asarray(volumes, dtype=float)
        return cls(sp.csr_matrix((n_nodes, n_nodes)), volumes, np.arange(n_nodes))

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    def neighbors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Neighbour indices of node ``i`` and the matching weights."""
        start, end = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[start:end], self.adjacency.data[start:end]

    def degrees(self) -> np.ndarray:
        """Total incident weight per node."""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def validate(self) -> None:
        """Checks symmetry, weight and volume invariants.

        Raises:
            InvariantError: On the first violated invariant.
        """
        w = self.adjacency
        if w.shape != (self.n_nodes, self.n_nodes):
            raise InvariantError(f"adjacency must be square, got {w.shape}.")
        if self.volumes.shape != (self.n_nodes,) or self.point_refs.shape != (self.n_nodes,):
            raise InvariantError("volumes and point_refs must have one entry per node.")
        if np.any(w.diagonal() != 0):
            raise InvariantError("graph has self-loops.")
        if w.nnz and not (np.all(np.isfinite(w.data)) and np.all(w.data > 0)):
            raise InvariantError("edge weights must be positive and finite.")
        if (w != w.T).nnz:
            raise InvariantError("adjacency is not symmetric.")
        if not (np.all(np.isfinite(self.volumes)) and np.all(self.volumes > 0)):
            raise InvariantError("volumes must be positive and finite.")


def edge_weight(xi: np.ndarray, xj: np.ndarray) -> float:
    """Inverse Euclidean distance, capped for coincident points."""
    return 1.0 / max(float(np.linalg.norm(np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float))), EPS_DIST)


def _topk_from_pairs(n: int, rows: np.ndarray, cols: np.ndarray, dists: np.ndarray,
                     k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keeps, for every row, its k closest distinct candidates (ties by lower column)."""
    keep = rows != cols
    rows, cols, dists = rows[keep], cols[keep], dists[keep]

    order = np.lexsort((cols, rows))
    rows, cols, dists = rows[order], cols[order], dists[order]
    first = np.ones(rows.shape[0], dtype=bool)
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    rows, cols, dists = rows[first], cols[first], dists[first]

    order = np.lexsort((cols, dists, rows))
    rows, cols, dists = rows[order], cols[order], dists[order]
    starts = np.searchsorted(rows, np.arange(n))
    rank = np.arange(rows.shape[0]) - starts[rows]
    keep = rank < k
    return rows[keep], cols[keep], dists[keep]


def _exact_neighbors(x: np.ndarray, k: int, rows: Optional[np.ndarray] = None,
                     chunk_size: int = 1024) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Brute-force k nearest neighbours of ``rows`` (all rows by default)."""
    rows = np.arange(x.shape[0]) if rows is None else rows
    out_rows, out_cols, out_d = [], [], []
    for start in range(0, rows.shape[0], chunk_size):
        block = rows[start:start + chunk_size]
        d2 = cdist(x[block], x, metric="sqeuclidean")
        d2[np.arange(block.shape[0]), block] = np.inf

        kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
        below = d2 < kth
        # fill up to k with the lowest-index entries equal to the k-th value
        need = k - below.sum(axis=1, keepdims=True)
        equal = d2 == kth
        chosen = below | (equal & (np.cumsum(equal, axis=1) <= need))

        r, c = np.nonzero(chosen)
        out_rows.append(block[r])
        out_cols.append(c)
        out_d.append(d2[r, c])
    return np.concatenate(out_rows), np.concatenate(out_cols), np.concatenate(out_d)


def _pair_sqdist(x: np.ndarray, rows: np.ndarray, cols: np.ndarray, chunk_size: int = 65536) -> np.ndarray:
    out = np.empty(rows.shape[0])
    for start in range(0, rows.shape[0], chunk_size):
        diff = x[rows[start:start + chunk_size]] - x[cols[start:start + chunk_size]]
        out[start:start + chunk_size] = np.einsum("ij,ij->i", diff, diff)
    return out


def _rp_tree_leaves(x: np.ndarray, leaf_size: int, rng: np.random.Generator):
    """Splits the rows by random hyperplanes until every leaf holds at most ``leaf_size`` rows."""
    leaves = []
    stack = [np.arange(x.shape[0])]
    while stack:
        members = stack.pop()
        if members.shape[0] <= leaf_size:
            leaves.append(members)
            continue
        a, b = rng.choice(members, size=2, replace=False)
        normal = x[a] - x[b]
        side = (x[members] - 0.5 * (x[a] + x[b])) @ normal > 0
        n_right = int(side.sum())
        if n_right == 0 or n_right == members.shape[0]:
            # coincident points: split at random
            side = np.zeros(members.shape[0], dtype=bool)
            side[rng.permutation(members.shape[0])[: members.shape[0] // 2]] = True
        stack.append(members[side])
        stack.append(members[~side])
    return leaves


def _approximate_neighbors(x: np.ndarray, k: int, n_trees: int, leaf_size: int, refine_iters: int,
                           seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    leaf_size = max(leaf_size, k + 1)

    cand_rows, cand_cols = [], []
    for _ in range(n_trees):
        for leaf in _rp_tree_leaves(x, leaf_size, rng):
            r, c = np.meshgrid(leaf, leaf, indexing="ij")
            cand_rows.append(r.ravel())
            cand_cols.append(c.ravel())
    rows = np.concatenate(cand_rows)
    cols = np.concatenate(cand_cols)
    rows, cols, d2 = _topk_from_pairs(n, rows, cols, _pair_sqdist(x, rows, cols), k)

    for iteration in range(refine_iters):
        # neighbours of neighbours, both directions
        nbr = sp.csr_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(n, n))
        nbr = nbr.maximum(nbr.T).tocsr()
        two_hop = (nbr @ nbr).tocoo()
        new_rows = np.concatenate([rows, two_hop.row])
        new_cols = np.concatenate([cols, two_hop.col])
        new_d2 = np.concatenate([d2, _pair_sqdist(x, two_hop.row, two_hop.col)])
        updated = _topk_from_pairs(n, new_rows, new_cols, new_d2, k)
        changed = updated[0].shape != rows.shape or np.any(updated[1] != cols)
        rows, cols, d2 = updated
        logger.debug("refinement pass %d: %d candidate pairs", iteration + 1, two_hop.nnz)
        if not changed:
            break

    counts = np.bincount(rows, minlength=n)
    short = np.flatnonzero(counts < k)
    if short.size:
        logger.debug("%d rows short of %d candidates, completing exactly", short.size, k)
        keep = counts[rows] >= k
        er, ec, ed = _exact_neighbors(x, k, short)
        rows = np.concatenate([rows[keep], er])
        cols = np.concatenate([cols[keep], ec])
        d2 = np.concatenate([d2[keep], ed])
    return rows, cols, d2


def build_knn_graph(points, k: int = 10, mode: str = "auto", volumes: Optional[np.ndarray] = None,
                    point_refs: Optional[np.ndarray] = None, n_trees: int = 8, leaf_size: int = 64,
                    refine_iters: int = 3, seed: int = 0) -> AffinityGraph:
    """Builds the symmetrized k-NN affinity graph of ``points``.

    Every node is joined to its k nearest Euclidean neighbours (ties by lower
    index); the directed lists are merged by edge union and weighted with
    :func:`edge_weight`.

    Args:
        points: n x d dense or sparse rows.
        k: Neighbours per node, 1 <= k < n.
        mode: ``exact``, ``approximate`` or ``auto`` (exact below 20000 rows).
        volumes: Node volumes; all ones when omitted.
        point_refs: Data row per node; identity when omitted.
        n_trees: Random-projection trees (approximate mode).
        leaf_size: Largest leaf of a projection tree (approximate mode).
        refine_iters: Neighbour-of-neighbour passes (approximate mode).
        seed: Seed for the projection trees.

    Returns:
        AffinityGraph: The graph.

    Raises:
        GraphError: If n < 2 or k is out of range.
        ValidationError: On an unknown mode.
    """
    if mode not in KNN_MODES:
        raise ValidationError(f"unknown k-NN mode '{mode}', expected one of {KNN_MODES}.")
    x = points.toarray() if sp.issparse(points) else np.asarray(points, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise GraphError(f"a k-NN graph needs at least 2 points, got {n}.")
    if not 1 <= k < n:
        raise GraphError(f"k must satisfy 1 <= k < n, got k={k} for n={n}.")

    if mode == "auto":
        mode = "exact" if n < EXACT_LIMIT else "approximate"
    if mode == "exact":
        rows, cols, d2 = _exact_neighbors(x, k)
    else:
        rows, cols, d2 = _approximate_neighbors(x, k, n_trees, leaf_size, refine_iters, seed)

    weights = 1.0 / np.maximum(np.sqrt(d2), EPS_DIST)
    directed = sp.csr_matrix((weights, (rows, cols)), shape=(n, n))
    adjacency = directed.maximum(directed.T).tocsr()
    adjacency.sort_indices()

    graph = AffinityGraph(
        adjacency,
        np.ones(n) if volumes is None else np.asarray(volumes, dtype=float),
        np.arange(n) if point_refs is None else np.asarray(point_refs),
    )
    logger.debug("%s k-NN graph: n=%d k=%d edges=%d", mode, n, k, graph.n_edges)
    return graph


def dump_graph(graph: AffinityGraph, path: str) -> None:
    """Writes ``n_nodes n_edges`` then one ``i j w_ij`` line per undirected edge (i < j)."""
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    lines = [f"{graph.n_nodes} {upper.nnz}"]
    lines.extend(f"{int(upper.row[e])} {int(upper.col[e])} {float(upper.data[e])!r}" for e in order)
    atomic_write_text(path, "\n".join(lines) + "\n")

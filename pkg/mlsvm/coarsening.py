"""
AMG coarsening of per-class affinity graphs
Future volumes, seed selection, interpolation and the Galerkin coarse level
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import InvariantError, ValidationError
from .knn_graph import KNN_MODES, AffinityGraph, build_knn_graph
from .storage import atomic_write_text

logger = logging.getLogger(__name__)

EPS_W = 1e-12
COARSE_EDGE_MODES = ("knn", "algebraic")


@dataclass
class CoarseningConfig:
    """Settings of the per-class hierarchy build.

    Attributes:
        q (float): Coupling threshold for seed selection, 0 < q < 1.
        eta (float): Outlier factor; nodes with future volume above eta times the mean become seeds.
        caliber (int): Largest number of seeds a fine node interpolates from (1-10).
        k (int): Neighbours per node when coarse levels are rewired.
        stop_size (int): Coarsening stops once a level has at most this many nodes.
        max_levels (int): Upper bound on hierarchy depth, finest level included.
        coarse_edges (str): ``knn`` rebuilds a k-NN graph on coarse points, ``algebraic`` keeps P^T W P.
        knn_mode (str): k-NN construction mode for rewired levels.
        stall_ratio (float): Stop when the seed set keeps at least this share of the nodes.
        seed (int): Seed forwarded to approximate k-NN construction.
    """
    q: float = 0.5
    eta: float = 2.0
    caliber: int = 2
    k: int = 10
    stop_size: int = 500
    max_levels: int = 50
    coarse_edges: str = "knn"
    knn_mode: str = "auto"
    stall_ratio: float = 0.95
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise ValidationError(f"Q must lie in (0, 1), got {self.q}.")
        if self.eta <= 0:
            raise ValidationError(f"eta must be positive, got {self.eta}.")
        if not 1 <= self.caliber <= 10:
            raise ValidationError(f"caliber R must lie in 1..10, got {self.caliber}.")
        if self.k < 1:
            raise ValidationError(f"k must be at least 1, got {self.k}.")
        if self.stop_size < 2:
            raise ValidationError(f"stop_size must be at least 2, got {self.stop_size}.")
        if self.max_levels < 1:
            raise ValidationError(f"max_levels must be at least 1, got {self.max_levels}.")
        if self.coarse_edges not in COARSE_EDGE_MODES:
            raise ValidationError(f"coarse_edges must be one of {COARSE_EDGE_MODES}, got '{self.coarse_edges}'.")
        if self.knn_mode not in KNN_MODES:
            raise ValidationError(f"knn_mode must be one of {KNN_MODES}, got '{self.knn_mode}'.")
        if not 0.0 < self.stall_ratio <= 1.0:
            raise ValidationError(f"stall_ratio must lie in (0, 1], got {self.stall_ratio}.")


@dataclass(frozen=True)
class InterpolationMatrix:
    """Fine-to-coarse interpolation P (rows: fine nodes, columns: seeds in ascending node order)."""
    matrix: sp.csr_matrix
    seeds: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "InterpolationMatrix":
        return cls(sp.identity(n, format="csr"), np.arange(n))

    @property
    def n_fine(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def _by_column(self) -> sp.csc_matrix:
        return self.matrix.tocsc()

    def aggregate(self, col: int) -> np.ndarray:
        """Fine nodes with a nonzero share in coarse node ``col``."""
        csc = self._by_column
        members = csc.indices[csc.indptr[col]:csc.indptr[col + 1]]
        return np.sort(members[csc.data[csc.indptr[col]:csc.indptr[col + 1]] > 0])

    def members(self, cols: Sequence[int]) -> np.ndarray:
        """Union of the aggregates of ``cols``."""
        cols = np.asarray(cols, dtype=np.int64)
        if cols.size == 0:
            return np.empty(0, dtype=np.int64)
        share = np.asarray(self._by_column[:, cols].sum(axis=1)).ravel()
        return np.flatnonzero(share > 0)

    def validate(self, caliber: Optional[int] = None) -> None:
        row_sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            raise InvariantError("interpolation rows must sum to 1.")
        nnz = np.diff(self.matrix.indptr)
        if np.any(nnz < 1) or (caliber is not None and np.any(nnz > caliber)):
            raise InvariantError(f"interpolation rows must hold 1..{caliber} nonzeros.")
        seed_rows = self.matrix[self.seeds]
        if seed_rows.nnz != self.seeds.shape[0] or np.any(seed_rows.indices != np.arange(self.seeds.shape[0])):
            raise InvariantError("seed rows must be unit rows at their own column.")


@dataclass(frozen=True)
class Level:
    """One level of a class hierarchy.

    ``interpolation`` maps the next-finer level onto this one and is None at
    the finest level.
    """
    graph: AffinityGraph
    points: np.ndarray
    level_index: int
    interpolation: Optional[InterpolationMatrix] = None
    copied: bool = False

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def volumes(self) -> np.ndarray:
        return self.graph.volumes


@dataclass(frozen=True)
class ClassHierarchy:
    """Levels of one class, finest (index 0) to coarsest."""
    levels: Tuple[Level, ...]
    label: int = 0
    stalled: bool = field(default=False, compare=False)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def coarsest(self) -> Level:
        return self.levels[-1]

    def sizes(self) -> List[int]:
        return [level.n_nodes for level in self.levels]

    def total_volumes(self) -> List[float]:
        return [float(level.volumes.sum()) for level in self.levels]


def future_volumes(g: AffinityGraph, in_f: Optional[np.ndarray] = None) -> np.ndarray:
    """Future volume of every node, counting contributions of F nodes only.

    Args:
        g: The graph.
        in_f: Boolean mask of F nodes; all nodes when omitted.

    Returns:
        np.ndarray: v_i + sum over F neighbours j of v_j * w_ji / deg_j.
    """
    degrees = g.degrees()
    share = np.zeros(g.n_nodes)
    connected = degrees > 0
    share[connected] = g.volumes[connected] / degrees[connected]
    if in_f is not None:
        share[~in_f] = 0.0
    return g.volumes + g.adjacency @ share


def select_seeds(g: AffinityGraph, q: float = 0.5, eta: float = 2.0) -> np.ndarray:
    """Chooses the coarse seeds C of a graph.

    Nodes whose future volume exceeds ``eta`` times the mean are seeds
    outright. The rest are visited by decreasing future volume (recomputed
    over F, ties by lower index) and become seeds while their coupling to
    the seeds so far is at most ``q``.

    Returns:
        np.ndarray: Seed node indices, ascending.
    """
    if g.n_nodes == 0:
        raise ValidationError("cannot select seeds of an empty graph.")
    if not 0.0 < q < 1.0 or eta <= 0:
        raise ValidationError(f"need 0 < Q < 1 and eta > 0, got Q={q}, eta={eta}.")

    theta = future_volumes(g)
    is_seed = theta > eta * theta.mean()
    theta = future_volumes(g, in_f=~is_seed)

    degrees = g.degrees()
    coupling = g.adjacency @ is_seed.astype(float)
    candidates = np.flatnonzero(~is_seed)
    order = candidates[np.lexsort((candidates, -theta[candidates]))]

    for i in order:
        ratio = coupling[i] / degrees[i] if degrees[i] > 0 else 0.0
        if ratio <= q:
            is_seed[i] = True
            nbrs, weights = g.neighbors(i)
            coupling[nbrs] += weights

    # F nodes with no seed neighbour (isolated ones) become seeds
    uncovered = ~is_seed & (coupling <= 0)
    if np.any(uncovered):
        logger.debug("promoting %d uncovered nodes to seeds", int(uncovered.sum()))
        is_seed |= uncovered
    return np.flatnonzero(is_seed)


def build_interpolation(g: AffinityGraph, seeds: np.ndarray, caliber: int = 2) -> InterpolationMatrix:
    """Builds P: unit rows for seeds, the ``caliber`` strongest seed neighbours renormalized otherwise.

    Raises:
        InvariantError: If a non-seed node has no seed neighbour.
    """
    n = g.n_nodes
    seeds = np.asarray(seeds, dtype=np.int64)
    column = np.full(n, -1, dtype=np.int64)
    column[seeds] = np.arange(seeds.shape[0])

    rows, cols, vals = [seeds], [np.arange(seeds.shape[0])], [np.ones(seeds.shape[0])]
    for i in np.flatnonzero(column < 0):
        nbrs, weights = g.neighbors(i)
        to_seed = column[nbrs] >= 0
        if not np.any(to_seed):
            raise InvariantError(f"node {i} has no seed neighbour.")
        nbrs, weights = nbrs[to_seed], weights[to_seed]
        kept = np.lexsort((nbrs, -weights))[:caliber]
        rows.append(np.full(kept.shape[0], i))
        cols.append(column[nbrs[kept]])
        vals.append(weights[kept] / weights[kept].sum())

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, seeds.shape[0]),
    )
    matrix.sort_indices()
    return InterpolationMatrix(matrix, seeds)


def coarsen_level(fine: Level, p: InterpolationMatrix) -> Level:
    """Galerkin coarse level: W_c = off-diagonal of P^T W P, volumes P^T v, volume-weighted centroids.

    Entries of W_c below 1e-12 are dropped.
    """
    w = fine.graph.adjacency
    pt = p.matrix.T.tocsr()
    coarse_w = (pt @ w @ p.matrix).tocsr()
    coarse_w = (coarse_w - sp.diags(coarse_w.diagonal())).tocsr()
    coarse_w.data[coarse_w.data < EPS_W] = 0.0
    coarse_w.eliminate_zeros()
    coarse_w = coarse_w.maximum(coarse_w.T).tocsr()
    coarse_w.sort_indices()

    volumes = pt @ fine.volumes
    points = (pt @ (fine.volumes[:, None] * fine.points)) / volumes[:, None]
    graph = AffinityGraph(coarse_w, volumes, np.arange(p.n_coarse))
    return Level(graph, np.asarray(points), fine.level_index + 1, p)


def _rewire(level: Level, cfg: CoarseningConfig) -> Level:
    """Replaces the algebraic coarse edges by a k-NN graph on the coarse points."""
    n = level.n_nodes
    if n < 2:
        graph = AffinityGraph.edgeless(n, level.volumes)
    else:
        graph = build_knn_graph(level.points, k=min(cfg.k, n - 1), mode=cfg.knn_mode,
                                volumes=level.volumes, seed=cfg.seed + level.level_index)
    return replace(level, graph=graph)


def build_hierarchy(g0: AffinityGraph, points0: np.ndarray, cfg: Optional[CoarseningConfig] = None,
                    label: int = 0) -> ClassHierarchy:
    """Coarsens one class until it is small enough.

    Stops when a level has at most ``stop_size`` nodes, when the seed set
    would keep ``stall_ratio`` of the nodes or more, or at ``max_levels``.

    Args:
        g0: Finest graph.
        points0: Finest data rows, one per node.
        cfg: Coarsening settings.
        label: Class label recorded on the hierarchy.

    Returns:
        ClassHierarchy: Levels finest to coarsest.
    """
    cfg = cfg or CoarseningConfig()
    cfg.validate()
    levels = [Level(g0, np.asarray(points0, dtype=float), 0)]
    stalled = False

    while levels[-1].n_nodes > cfg.stop_size and len(levels) < cfg.max_levels:
        current = levels[-1]
        seeds = select_seeds(current.graph, cfg.q, cfg.eta)
        if seeds.shape[0] >= cfg.stall_ratio * current.n_nodes:
            logger.warning("coarsening of class %+d stalled at level %d (%d of %d nodes kept)",
                           label, current.level_index, seeds.shape[0], current.n_nodes)
            stalled = True
            break
        p = build_interpolation(current.graph, seeds, cfg.caliber)
        coarse = coarsen_level(current, p)
        if cfg.coarse_edges == "knn":
            coarse = _rewire(coarse, cfg)
        levels.append(coarse)
        logger.debug("class %+d level %d: %d -> %d nodes", label, coarse.level_index,
                     current.n_nodes, coarse.n_nodes)

    hierarchy = ClassHierarchy(tuple(levels), label, stalled)
    logger.info("class %+d hierarchy sizes: %s", label, hierarchy.sizes())
    return hierarchy


def copy_small_class_levels(h_small: ClassHierarchy, target_depth: int) -> ClassHierarchy:
    """Pads a hierarchy to ``target_depth`` by repeating its coarsest level with identity P.

    Raises:
        ValidationError: If ``target_depth`` is below the current depth.
    """
    if target_depth < h_small.depth:
        raise ValidationError(f"cannot shrink a hierarchy of depth {h_small.depth} to {target_depth}.")
    levels = list(h_small.levels)
    coarsest = h_small.coarsest
    while len(levels) < target_depth:
        levels.append(Level(coarsest.graph, coarsest.points, len(levels),
                            InterpolationMatrix.identity(coarsest.n_nodes), copied=True))
    return ClassHierarchy(tuple(levels), h_small.label, h_small.stalled)


def align_depths(h_plus: ClassHierarchy, h_minus: ClassHierarchy) -> Tuple[ClassHierarchy, ClassHierarchy]:
    """Pads the shallower hierarchy so both have equal depth."""
    depth = max(h_plus.depth, h_minus.depth)
    return copy_small_class_levels(h_plus, depth), copy_small_class_levels(h_minus, depth)


def dump_hierarchy(h: ClassHierarchy, path: str) -> None:
    """Writes every level's size, volumes, edges and P triplets as text."""
    lines = [f"label = {h.label:+d}", f"depth = {h.depth}"]
    for level in h.levels:
        upper = sp.triu(level.graph.adjacency, k=1).tocoo()
        lines.append(f"level = {level.level_index}")
        lines.append(f"n_nodes = {level.n_nodes}")
        lines.append(f"copied = {str(level.copied).lower()}")
        lines.append("volumes = " + " ".join(repr(float(v)) for v in level.volumes))
        lines.append(f"edges = {upper.nnz}")
        lines.extend(f"{int(i)} {int(j)} {float(w)!r}" for i, j, w in zip(upper.row, upper.col, upper.data))
        if level.interpolation is not None:
            p = level.interpolation.matrix.tocoo()
            lines.append(f"interpolation = {p.nnz}")
            lines.extend(f"{int(i)} {int(j)} {float(v)!r}" for i, j, v in zip(p.row, p.col, p.data))
    atomic_write_text(path, "\n".join(lines) + "\n")

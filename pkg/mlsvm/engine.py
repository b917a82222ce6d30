"""
Multilevel training engine
Coarsen each class, learn at the coarsest level, then refine level by level
on the aggregates of the support vectors found one level up.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .coarsening import ClassHierarchy, CoarseningConfig, InterpolationMatrix, Level, align_depths, build_hierarchy
from .dataset import Dataset, stratified_split_indices
from .exceptions import ConvergenceError, DomainError, ValidationError
from .knn_graph import AffinityGraph, build_knn_graph
from .metrics import Metrics, compute_metrics
from .model_selection import SearchDomain, TuningResult, make_folds, tune
from .solver import DEFAULT_CACHE_MB, DEFAULT_MAX_ITER, DEFAULT_TOL, ModelParams, TrainedModel, predict, train
from .storage import Provenance, write_csv_report

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["level", "n_plus", "n_minus", "n_train", "refined", "log2Cplus", "log2Cminus",
                  "log2gamma", "n_sv", "kappa_val", "seconds"]


@dataclass
class MultilevelConfig:
    """Everything the multilevel engine needs.

    Attributes:
        coarsening (CoarseningConfig): Hierarchy settings, k-NN k and mode included.
        q_dt (int): Training sets smaller than this are re-tuned while uncoarsening.
        domain (SearchDomain): UD search domain and weight rule.
        folds (int): Cross-validation folds inside tuning.
        tol (float): Solver KKT tolerance.
        max_iter (int): Solver pair-update cap.
        cache_mb (float): Solver kernel cache budget.
        neighbor_expand (bool): Add fine k-NN neighbours of SV aggregates to the training set.
        volume_weighting (bool): Use node volumes as instance weights.
        validation_fraction (float): Stratified share of the input held out for per-level kappa.
        seed (int): Base seed for the validation carve, folds and approximate k-NN.
        n_jobs (int): Threads used to score tuning candidates.
        refine_pool (int): Most fine-level points a refinement search validates on.
    """
    coarsening: CoarseningConfig = field(default_factory=CoarseningConfig)
    q_dt: int = 4000
    domain: SearchDomain = field(default_factory=SearchDomain)
    folds: int = 5
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    cache_mb: float = DEFAULT_CACHE_MB
    neighbor_expand: bool = False
    volume_weighting: bool = False
    validation_fraction: float = 0.1
    seed: int = 0
    n_jobs: int = 1
    refine_pool: int = 20000

    def validate(self) -> None:
        self.coarsening.validate()
        self.domain.validate()
        if self.q_dt < self.coarsening.stop_size:
            raise ValidationError(f"q_dt ({self.q_dt}) must be at least stop_size ({self.coarsening.stop_size}).")
        if self.folds < 2:
            raise ValidationError(f"folds must be at least 2, got {self.folds}.")
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}.")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}.")
        if self.n_jobs < 1:
            raise ValidationError(f"n_jobs must be at least 1, got {self.n_jobs}.")
        if self.refine_pool < 2:
            raise ValidationError(f"refine_pool must be at least 2, got {self.refine_pool}.")


@dataclass
class LevelSolution:
    """Model learned at one level and its support vectors as node ids per class."""
    model: TrainedModel
    params: ModelParams
    sv_node_ids: Dict[int, np.ndarray]
    level_index: int
    refined: bool = True
    n_train: int = 0
    tuning: Optional[TuningResult] = None


@dataclass(frozen=True)
class LevelReport:
    level: int
    n_plus: int
    n_minus: int
    n_train: int
    refined: bool
    log2_c_plus: float
    log2_c_minus: float
    log2_gamma: float
    n_sv: int
    kappa_val: float
    seconds: float
    volume_plus: float = 0.0
    volume_minus: float = 0.0


@dataclass
class MultilevelResult:
    """Final model plus what it took to get there.

    ``model.sv_indices`` index the training set passed to the engine.
    """
    model: TrainedModel
    reports: List[LevelReport]
    hierarchies: Optional[Tuple[ClassHierarchy, ClassHierarchy]]
    fit_indices: np.ndarray
    validation_indices: np.ndarray
    last_tuning: Optional[TuningResult] = None

    @property
    def params(self) -> ModelParams:
        return self.model.params


def _carve_validation(train_set: Dataset, cfg: MultilevelConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Splits the input into fit rows and held-out validation rows."""
    everything = np.arange(len(train_set))
    if cfg.validation_fraction <= 0 or min(train_set.n_plus, train_set.n_minus) < 2:
        return everything, np.empty(0, dtype=np.int64)
    return stratified_split_indices(train_set.labels, cfg.validation_fraction, cfg.seed)


def _class_rows(train_set: Dataset, rows: np.ndarray, label: int) -> np.ndarray:
    return rows[train_set.labels[rows] == label]


def _stack(plus: Tuple[np.ndarray, np.ndarray], minus: Tuple[np.ndarray, np.ndarray]):
    """Stacks (points, volumes) of both classes, positives first."""
    x = np.vstack([plus[0], minus[0]])
    y = np.concatenate([np.ones(plus[0].shape[0], dtype=np.int8), -np.ones(minus[0].shape[0], dtype=np.int8)])
    volumes = np.concatenate([plus[1], minus[1]])
    return x, y, volumes


def _split_sv(model: TrainedModel, nodes_plus: np.ndarray, nodes_minus: np.ndarray) -> Dict[int, np.ndarray]:
    """Maps model SV rows back to node ids of each class."""
    n_plus = nodes_plus.shape[0]
    sv = model.sv_indices
    return {1: np.sort(nodes_plus[sv[sv < n_plus]]), -1: np.sort(nodes_minus[sv[sv >= n_plus] - n_plus])}


def _fit(x: np.ndarray, y: np.ndarray, volumes: np.ndarray, cfg: MultilevelConfig, level_index: int,
         center: Optional[ModelParams], refine: bool) -> Tuple[TrainedModel, ModelParams, Optional[TuningResult]]:
    weights = volumes if cfg.volume_weighting else None
    if refine:
        folds = make_folds(y, cfg.folds, cfg.seed + level_index)
        result = tune(Dataset(x, y), folds, cfg.domain, center, weights, cfg.tol, cfg.max_iter,
                      cfg.cache_mb, cfg.n_jobs)
        return result.best_model, result.best_params, result

    try:
        model = train(x, y, center, weights, cfg.tol, cfg.max_iter, cfg.cache_mb)
    except ConvergenceError as e:
        logger.warning("level %d: training did not converge; keeping the last iterate", level_index)
        model = e.best_model
    return model, center, None


def coarsest_train(level_plus: Level, level_minus: Level, cfg: MultilevelConfig) -> LevelSolution:
    """Full-domain UD tuning on the coarsest points of both classes.

    Returns:
        LevelSolution: Coarsest model with its support vectors per class.
    """
    x, y, volumes = _stack((level_plus.points, level_plus.volumes), (level_minus.points, level_minus.volumes))
    if x.shape[0] > cfg.q_dt:
        logger.warning("coarsest level holds %d points, above q_dt=%d", x.shape[0], cfg.q_dt)
    model, params, tuning = _fit(x, y, volumes, cfg, level_plus.level_index, None, refine=True)
    nodes_plus = np.arange(level_plus.n_nodes)
    nodes_minus = np.arange(level_minus.n_nodes)
    return LevelSolution(model, params, _split_sv(model, nodes_plus, nodes_minus), level_plus.level_index,
                         True, x.shape[0], tuning)


def _training_nodes(sv_nodes: np.ndarray, p: InterpolationMatrix, fine: Level, expand: bool, label: int) -> np.ndarray:
    nodes = p.members(sv_nodes)
    if nodes.size == 0:
        logger.warning("class %+d has no support vectors; training on the whole fine level", label)
        nodes = p.members(np.arange(p.n_coarse))
    if expand:
        reach = np.asarray(fine.graph.adjacency[nodes].sum(axis=0)).ravel() > 0
        nodes = np.union1d(nodes, np.flatnonzero(reach))
    return nodes


def _refinement_pool(labels: np.ndarray, limit: int, seed: int) -> np.ndarray:
    """Fine-level rows a refinement search validates on, stratified down to ``limit``."""
    everything = np.arange(labels.shape[0])
    smallest = min(int(np.count_nonzero(labels == 1)), int(np.count_nonzero(labels == -1)))
    if labels.shape[0] <= limit or smallest < 2:
        return everything
    _, kept = stratified_split_indices(labels, limit / labels.shape[0], seed)
    return kept


def _refinement_folds(band: np.ndarray, band_labels: np.ndarray, pool_labels: np.ndarray,
                      cfg: MultilevelConfig, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Folds that train on the SV band and validate on held-out fine-level nodes.

    ``band`` holds the fine-level row of every training point. Each fold
    holds out a stratified share of the fine level; training keeps the band
    rows outside that share, or the whole band if a class would vanish.
    """
    pool = _refinement_pool(pool_labels, cfg.refine_pool, seed)
    folds = []
    for _, held in make_folds(pool_labels[pool], cfg.folds, seed):
        held_out = pool[held]
        train_rows = np.flatnonzero(~np.isin(band, held_out))
        if np.unique(band_labels[train_rows]).size < 2:
            train_rows = np.arange(band.shape[0])
        folds.append((train_rows, held_out))
    return folds


def _refine(x: np.ndarray, y: np.ndarray, volumes: np.ndarray, level_f_plus: Level, level_f_minus: Level,
            nodes_plus: np.ndarray, nodes_minus: np.ndarray, cfg: MultilevelConfig,
            center: ModelParams) -> Tuple[TrainedModel, ModelParams, TuningResult]:
    """Re-tunes around ``center``, judging candidates on the whole fine level.

    Models train on the SV band and are scored on fine nodes outside it as
    well. The inherited parameters stay unless a candidate beats them.
    """
    pool_x, pool_y, _ = _stack((level_f_plus.points, level_f_plus.volumes),
                               (level_f_minus.points, level_f_minus.volumes))
    band = np.concatenate([nodes_plus, nodes_minus + level_f_plus.n_nodes])
    folds = _refinement_folds(band, y, pool_y, cfg, cfg.seed + level_f_plus.level_index)
    weights = volumes if cfg.volume_weighting else None
    result = tune(Dataset(x, y), folds, cfg.domain, center, weights, cfg.tol, cfg.max_iter, cfg.cache_mb,
                  cfg.n_jobs, holdout=Dataset(pool_x, pool_y), keep_center=True)
    return result.best_model, result.best_params, result


def uncoarsen_step(sol_coarse: LevelSolution, level_f_plus: Level, level_f_minus: Level, cfg: MultilevelConfig,
                   interpolation: Tuple[InterpolationMatrix, InterpolationMatrix]) -> LevelSolution:
    """Projects the coarse solution one level down and retrains there.

    The fine training set of each class is the union of the aggregates
    (fractional members included) of that class's coarse support vectors,
    optionally grown by their k-NN neighbours. Below ``q_dt`` points the
    parameters are re-tuned around the inherited ones, with every candidate
    validated on held-out nodes of the whole fine level; otherwise the
    inherited parameters are reused unchanged.

    Args:
        sol_coarse: Solution at the next-coarser level.
        level_f_plus: Fine level of the positive class.
        level_f_minus: Fine level of the negative class.
        cfg: Engine settings.
        interpolation: P of each class from this level to the coarser one.

    Returns:
        LevelSolution: Solution at the fine level.
    """
    p_plus, p_minus = interpolation
    nodes_plus = _training_nodes(sol_coarse.sv_node_ids[1], p_plus, level_f_plus, cfg.neighbor_expand, 1)
    nodes_minus = _training_nodes(sol_coarse.sv_node_ids[-1], p_minus, level_f_minus, cfg.neighbor_expand, -1)

    x, y, volumes = _stack((level_f_plus.points[nodes_plus], level_f_plus.volumes[nodes_plus]),
                           (level_f_minus.points[nodes_minus], level_f_minus.volumes[nodes_minus]))
    refine = x.shape[0] < cfg.q_dt
    if refine:
        model, params, tuning = _refine(x, y, volumes, level_f_plus, level_f_minus, nodes_plus, nodes_minus, cfg,
                                        sol_coarse.params)
    else:
        model, params, tuning = _fit(x, y, volumes, cfg, level_f_plus.level_index, sol_coarse.params, False)
    logger.info("level %d: trained on %d points (%s), %d SVs", level_f_plus.level_index, x.shape[0],
                "refined" if refine else "inherited", model.n_sv)
    return LevelSolution(model, params, _split_sv(model, nodes_plus, nodes_minus), level_f_plus.level_index,
                         refine, x.shape[0], tuning)


def predict_final(model: TrainedModel, test: Dataset) -> Metrics:
    """Scores ``model`` on a labeled test set.

    Raises:
        DomainError: If the test set is empty or unlabeled.
        DimensionMismatchError: If feature counts differ.
    """
    if len(test) == 0:
        raise DomainError("test set is empty.")
    if not test.is_labeled:
        raise DomainError("test set has no labels.")
    return compute_metrics(predict(model, test.points), test.labels)


def _validation_kappa(model: TrainedModel, validation: Optional[Dataset]) -> float:
    if validation is None or len(validation) == 0:
        return float("nan")
    return predict_final(model, validation).kappa


def _report(sol: LevelSolution, plus: Level, minus: Level, validation: Optional[Dataset], seconds: float) -> LevelReport:
    p = sol.params
    return LevelReport(
        level=sol.level_index,
        n_plus=plus.n_nodes,
        n_minus=minus.n_nodes,
        n_train=sol.n_train,
        refined=sol.refined,
        log2_c_plus=p.log2_c_plus,
        log2_c_minus=p.log2_c_minus,
        log2_gamma=p.log2_gamma,
        n_sv=sol.model.n_sv,
        kappa_val=_validation_kappa(sol.model, validation),
        seconds=seconds,
        volume_plus=float(plus.volumes.sum()),
        volume_minus=float(minus.volumes.sum()),
    )


def _class_graph(points: np.ndarray, rows: np.ndarray, cfg: MultilevelConfig) -> AffinityGraph:
    if rows.shape[0] < 2:
        return replace(AffinityGraph.edgeless(rows.shape[0]), point_refs=rows)
    k = min(cfg.coarsening.k, rows.shape[0] - 1)
    return build_knn_graph(points, k=k, mode=cfg.coarsening.knn_mode, point_refs=rows, seed=cfg.seed)


def train_multilevel(train_set: Dataset, cfg: Optional[MultilevelConfig] = None) -> MultilevelResult:
    """Trains a weighted SVM through the class hierarchies.

    Args:
        train_set: Labeled training data with both classes.
        cfg: Engine settings.

    Returns:
        MultilevelResult: Level-0 model (SV indices into ``train_set``) and per-level reports.

    Raises:
        DomainError: If a class is missing.
    """
    cfg = cfg or MultilevelConfig()
    cfg.validate()
    if not train_set.is_labeled or train_set.n_plus == 0 or train_set.n_minus == 0:
        raise DomainError("multilevel training needs both classes.")

    fit_rows, val_rows = _carve_validation(train_set, cfg)
    validation = train_set.subset(val_rows) if val_rows.size else None
    x_all = train_set.dense_points()

    hierarchies = {}
    for label in (1, -1):
        rows = _class_rows(train_set, fit_rows, label)
        graph = _class_graph(x_all[rows], rows, cfg)
        hierarchies[label] = build_hierarchy(graph, x_all[rows], cfg.coarsening, label)
    h_plus, h_minus = align_depths(hierarchies[1], hierarchies[-1])
    depth = h_plus.depth

    reports: List[LevelReport] = []
    started = time.perf_counter()
    sol = coarsest_train(h_plus.coarsest, h_minus.coarsest, cfg)
    last_tuning = sol.tuning
    reports.append(_report(sol, h_plus.coarsest, h_minus.coarsest, validation, time.perf_counter() - started))

    for level in range(depth - 2, -1, -1):
        started = time.perf_counter()
        coarse_plus, coarse_minus = h_plus.levels[level + 1], h_minus.levels[level + 1]
        sol = uncoarsen_step(sol, h_plus.levels[level], h_minus.levels[level], cfg,
                             (coarse_plus.interpolation, coarse_minus.interpolation))
        reports.append(_report(sol, h_plus.levels[level], h_minus.levels[level], validation,
                               time.perf_counter() - started))
        last_tuning = sol.tuning or last_tuning

    # level-0 nodes refer to rows of the training set
    refs = {1: h_plus.levels[0].graph.point_refs, -1: h_minus.levels[0].graph.point_refs}
    n_plus_train = np.count_nonzero(sol.model.sv_labels == 1)
    original = _original_indices(sol, refs)
    model = replace(sol.model, sv_indices=original)
    logger.info("multilevel training done: %d levels, %d SVs (%d positive)", depth, model.n_sv, n_plus_train)
    return MultilevelResult(model, reports, (h_plus, h_minus), fit_rows, val_rows, last_tuning)


def _original_indices(sol: LevelSolution, refs: Dict[int, np.ndarray]) -> np.ndarray:
    """Training-set row of every SV, in model order."""
    sv_labels = sol.model.sv_labels
    out = np.empty(sol.model.n_sv, dtype=np.int64)
    for label in (1, -1):
        out[sv_labels == label] = refs[label][sol.sv_node_ids[label]]
    return out


def train_flat(train_set: Dataset, cfg: Optional[MultilevelConfig] = None) -> MultilevelResult:
    """UD-tuned weighted SVM on all fit rows, without a hierarchy.

    Uses the same validation carve and positives-first row order as
    :func:`train_multilevel`, so both agree exactly when no coarsening happens.
    """
    cfg = cfg or MultilevelConfig()
    cfg.validate()
    if not train_set.is_labeled or train_set.n_plus == 0 or train_set.n_minus == 0:
        raise DomainError("flat training needs both classes.")

    started = time.perf_counter()
    fit_rows, val_rows = _carve_validation(train_set, cfg)
    validation = train_set.subset(val_rows) if val_rows.size else None
    x_all = train_set.dense_points()
    rows_plus = _class_rows(train_set, fit_rows, 1)
    rows_minus = _class_rows(train_set, fit_rows, -1)

    x, y, volumes = _stack((x_all[rows_plus], np.ones(rows_plus.shape[0])),
                           (x_all[rows_minus], np.ones(rows_minus.shape[0])))
    model, params, tuning = _fit(x, y, volumes, cfg, 0, None, refine=True)
    sol = LevelSolution(model, params, _split_sv(model, np.arange(rows_plus.shape[0]), np.arange(rows_minus.shape[0])),
                        0, True, x.shape[0], tuning)
    model = replace(model, sv_indices=_original_indices(sol, {1: rows_plus, -1: rows_minus}))

    level = Level(AffinityGraph.edgeless(rows_plus.shape[0]), x_all[rows_plus], 0)
    level_minus = Level(AffinityGraph.edgeless(rows_minus.shape[0]), x_all[rows_minus], 0)
    report = _report(sol, level, level_minus, validation, time.perf_counter() - started)
    return MultilevelResult(model, [report], None, fit_rows, val_rows, tuning)


def level_report_frame(reports: List[LevelReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            [r.level, r.n_plus, r.n_minus, r.n_train, str(r.refined).lower(), r.log2_c_plus, r.log2_c_minus,
             r.log2_gamma, r.n_sv, r.kappa_val, r.seconds]
            for r in reports
        ],
        columns=REPORT_COLUMNS,
    )


def write_level_report(result: MultilevelResult, path: str, provenance: Optional[Provenance] = None) -> None:
    """Writes the per-level CSV report."""
    write_csv_report(path, level_report_frame(result.reports), provenance)

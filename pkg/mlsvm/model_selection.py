"""
Uniform-design search over (C, gamma)
Two nested UD stages scored by mean cross-validated kappa
"""
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .dataset import Dataset, FoldList, k_fold_indices
from .exceptions import ConvergenceError, DomainError, SolverError, ValidationError
from .metrics import compute_metrics
from .solver import DEFAULT_CACHE_MB, DEFAULT_MAX_ITER, DEFAULT_TOL, ModelParams, TrainedModel, predict, train
from .storage import Provenance, write_csv_report

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]
Rectangle = Tuple[Interval, Interval]

# second coordinate of each run; the first coordinate is the run number
UD_TABLES = {
    5: (2, 5, 3, 1, 4),
    9: (3, 8, 1, 6, 5, 4, 9, 2, 7),
    13: (3, 8, 13, 5, 10, 2, 7, 12, 4, 9, 1, 6, 11),
}

WEIGHT_RULE_PATTERN = re.compile(r"(imbalance)|fixed[:(]\s*([0-9.eE+-]+)\s*\)?")


@dataclass(frozen=True)
class WeightRule:
    """How (C+, C-) follow from a searched C.

    ``imbalance`` gives C+ = C * n- / n+ and C- = C; ``fixed`` gives C+ = ratio * C.
    """
    kind: str = "imbalance"
    ratio: float = 1.0

    def penalties(self, c: float, n_plus: int, n_minus: int) -> Tuple[float, float]:
        if self.kind == "imbalance":
            return c * n_minus / n_plus, c
        return self.ratio * c, c

    def __str__(self) -> str:
        return "imbalance" if self.kind == "imbalance" else f"fixed:{self.ratio!r}"


def parse_weight_rule(text: str) -> WeightRule:
    """Parses ``imbalance``, ``fixed:<r>`` or ``fixed(<r>)``."""
    match = WEIGHT_RULE_PATTERN.fullmatch(str(text).strip().lower())
    if not match:
        raise ValidationError(f"weight rule must be 'imbalance' or 'fixed:<r>', got '{text}'.")
    if match.group(1):
        return WeightRule()
    ratio = float(match.group(2))
    if not (math.isfinite(ratio) and ratio > 0):
        raise ValidationError(f"fixed weight ratio must be positive, got {ratio}.")
    return WeightRule("fixed", ratio)


@dataclass
class SearchDomain:
    """Search rectangle in (log2 C, log2 gamma) and UD run counts."""
    log2_c_range: Interval = (-5.0, 15.0)
    log2_gamma_range: Interval = (-15.0, 3.0)
    stage1_runs: int = 9
    stage2_runs: int = 5
    weight_rule: WeightRule = field(default_factory=WeightRule)

    def validate(self) -> None:
        for name, (lo, hi) in (("log2 C", self.log2_c_range), ("log2 gamma", self.log2_gamma_range)):
            if not hi > lo:
                raise ValidationError(f"{name} range ({lo}, {hi}) is degenerate.")
        for runs in (self.stage1_runs, self.stage2_runs):
            if runs not in UD_TABLES:
                raise ValidationError(f"UD run count must be one of {sorted(UD_TABLES)}, got {runs}.")

    @property
    def rectangle(self) -> Rectangle:
        return (tuple(self.log2_c_range), tuple(self.log2_gamma_range))


@dataclass(frozen=True)
class Evaluation:
    stage: int
    log2_c: float
    log2_gamma: float
    params: ModelParams
    kappa: float


@dataclass
class TuningResult:
    """Winner of a search, retrained on the whole training split."""
    best_params: ModelParams
    best_kappa: float
    best_model: TrainedModel
    evaluations: List[Evaluation]
    trainings: int = 0


def ud_points(rect: Rectangle, runs: int) -> List[Tuple[float, float]]:
    """Maps the compiled UD table for ``runs`` onto ``rect``.

    Level l of n becomes l / (n + 1) of the side, so every point is interior.

    Raises:
        ValidationError: On an unsupported run count or a degenerate rectangle.
    """
    if runs not in UD_TABLES:
        raise ValidationError(f"UD run count must be one of {sorted(UD_TABLES)}, got {runs}.")
    (c_lo, c_hi), (g_lo, g_hi) = rect
    if not (c_hi > c_lo and g_hi > g_lo):
        raise ValidationError(f"UD rectangle {rect} is degenerate.")
    points = []
    for first, second in enumerate(UD_TABLES[runs], start=1):
        u, v = first / (runs + 1), second / (runs + 1)
        points.append((c_lo + u * (c_hi - c_lo), g_lo + v * (g_hi - g_lo)))
    return points


def _sub_rectangle(center: Tuple[float, float], sides: Tuple[float, float], bounds: Rectangle) -> Rectangle:
    """Rectangle with the given side lengths around ``center``, clipped to ``bounds``."""
    out = []
    for value, side, (lo, hi) in zip(center, sides, bounds):
        value = min(max(value, lo), hi)
        out.append((max(lo, value - side / 2.0), min(hi, value + side / 2.0)))
    return tuple(out)


def make_folds(labels: np.ndarray, k: int, seed: int) -> FoldList:
    """Stratified folds, shrinking k to the smaller class size.

    A class with fewer than 2 points leaves nothing to hold out, so the
    result is one fold that trains and validates on everything.
    """
    smallest = min(int(np.count_nonzero(labels == 1)), int(np.count_nonzero(labels == -1)))
    if smallest < 2:
        everything = np.arange(labels.shape[0])
        return [(everything, everything)]
    return k_fold_indices(labels, min(k, smallest), seed)


class _Evaluator:
    """Scores candidates on fixed folds and counts solver calls.

    Fold training rows index ``x``; validation rows index ``x_val``, which is
    ``x`` itself unless a separate holdout pool is given.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray], folds: FoldList,
                 tol: float, max_iter: int, cache_mb: float,
                 holdout: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> None:
        self.x, self.y, self.weights, self.folds = x, y, weights, folds
        self.x_val, self.y_val = holdout if holdout is not None else (x, y)
        self.tol, self.max_iter, self.cache_mb = tol, max_iter, cache_mb
        self.trainings = 0

    def fit(self, rows: np.ndarray, params: ModelParams) -> TrainedModel:
        self.trainings += 1
        weights = None if self.weights is None else self.weights[rows]
        return train(self.x[rows], self.y[rows], params, weights, self.tol, self.max_iter, self.cache_mb)

    def score(self, params: ModelParams) -> float:
        """Mean validation kappa over the folds; 0 if any fold's solver fails."""
        kappas = []
        failed = False
        for train_rows, val_rows in self.folds:
            try:
                model = self.fit(train_rows, params)
            except SolverError as e:
                logger.warning("candidate %s failed: %s", params, e)
                failed = True
                continue
            kappas.append(compute_metrics(predict(model, self.x_val[val_rows]), self.y_val[val_rows]).kappa)
        return 0.0 if failed else float(np.mean(kappas))


def tune(train_set: Dataset, folds: FoldList, domain: Optional[SearchDomain] = None,
         center: Optional[ModelParams] = None, instance_weights: Optional[np.ndarray] = None,
         tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, cache_mb: float = DEFAULT_CACHE_MB,
         n_jobs: int = 1, holdout: Optional[Dataset] = None, keep_center: bool = False) -> TuningResult:
    """Two-stage UD search for the best (C, gamma) by mean fold kappa.

    Stage 1 covers the whole domain, or, given ``center``, a rectangle of
    half the domain's side lengths around it. Stage 2 runs around the stage-1
    winner in a rectangle of half the stage-1 side lengths. Both are clipped
    to the domain. Ties go to the smaller C, then the smaller gamma.

    Args:
        train_set: Labeled training rows with both classes.
        folds: (train, validation) index pairs. Training indices refer to
            ``train_set``; validation indices refer to ``holdout`` when given.
        domain: Search domain; defaults apply when omitted.
        center: Inherited parameters to refine around.
        instance_weights: Per-row box multipliers.
        tol: Solver KKT tolerance.
        max_iter: Solver pair-update cap.
        cache_mb: Solver kernel cache budget.
        n_jobs: Threads used to score candidates.
        holdout: Labeled points the folds validate on instead of ``train_set``.
        keep_center: Score ``center`` on the same folds (as stage 0) and keep
            it unless a UD candidate scores strictly higher.

    Returns:
        TuningResult: The winner retrained on all of ``train_set``.
    """
    domain = domain or SearchDomain()
    domain.validate()
    if train_set.n_plus == 0 or train_set.n_minus == 0:
        raise DomainError("tuning needs both classes in the training set.")

    x = train_set.dense_points()
    y = train_set.labels.astype(float)
    pool = None if holdout is None else (holdout.dense_points(), holdout.labels.astype(float))
    weights = None if instance_weights is None else np.asarray(instance_weights, dtype=float)
    bounds = domain.rectangle
    sides = (bounds[0][1] - bounds[0][0], bounds[1][1] - bounds[1][0])

    if center is None:
        stage1_rect = bounds
    else:
        stage1_rect = _sub_rectangle((center.log2_c_minus, center.log2_gamma),
                                     (sides[0] / 2.0, sides[1] / 2.0), bounds)

    evaluators: List[_Evaluator] = []
    evaluations: List[Evaluation] = []

    def evaluate(params: ModelParams) -> float:
        evaluator = _Evaluator(x, y, weights, folds, tol, max_iter, cache_mb, pool)
        evaluators.append(evaluator)
        return evaluator.score(params)

    def run_stage(stage: int, rect: Rectangle, runs: int) -> None:
        candidates = []
        for log2_c, log2_gamma in ud_points(rect, runs):
            c_plus, c_minus = domain.weight_rule.penalties(2.0 ** log2_c, train_set.n_plus, train_set.n_minus)
            candidates.append((log2_c, log2_gamma, ModelParams(c_plus, c_minus, 2.0 ** log2_gamma)))

        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool_executor:
                scores = list(pool_executor.map(lambda c: evaluate(c[2]), candidates))
        else:
            scores = [evaluate(c[2]) for c in candidates]

        for (log2_c, log2_gamma, params), kappa in zip(candidates, scores):
            logger.debug("stage %d log2C=%.4f log2g=%.4f kappa=%.4f", stage, log2_c, log2_gamma, kappa)
            evaluations.append(Evaluation(stage, log2_c, log2_gamma, params, kappa))

    def winner() -> Evaluation:
        return min((e for e in evaluations if e.stage > 0), key=lambda e: (-e.kappa, e.log2_c, e.log2_gamma))

    incumbent = None
    if keep_center and center is not None:
        incumbent = Evaluation(0, center.log2_c_minus, center.log2_gamma, center, evaluate(center))
        logger.debug("inherited log2C=%.4f log2g=%.4f kappa=%.4f", incumbent.log2_c, incumbent.log2_gamma,
                     incumbent.kappa)
        evaluations.append(incumbent)

    run_stage(1, stage1_rect, domain.stage1_runs)
    best = winner()
    stage1_sides = (stage1_rect[0][1] - stage1_rect[0][0], stage1_rect[1][1] - stage1_rect[1][0])
    stage2_rect = _sub_rectangle((best.log2_c, best.log2_gamma),
                                 (stage1_sides[0] / 2.0, stage1_sides[1] / 2.0), bounds)
    run_stage(2, stage2_rect, domain.stage2_runs)
    best = winner()
    if incumbent is not None and incumbent.kappa >= best.kappa:
        logger.debug("inherited parameters kept (kappa %.4f >= %.4f)", incumbent.kappa, best.kappa)
        best = incumbent

    final = _Evaluator(x, y, weights, folds, tol, max_iter, cache_mb)
    everything = np.arange(len(train_set))
    try:
        model = final.fit(everything, best.params)
    except ConvergenceError as e:
        logger.warning("final retrain did not converge; keeping the last iterate")
        model = e.best_model

    trainings = sum(ev.trainings for ev in evaluators) + final.trainings
    logger.info("UD winner C+=%.6g C-=%.6g gamma=%.6g kappa=%.4f (%d trainings)",
                best.params.c_plus, best.params.c_minus, best.params.gamma, best.kappa, trainings)
    return TuningResult(best.params, best.kappa, model, evaluations, trainings)


def write_tuning_trace(result: TuningResult, path: str, provenance: Optional[Provenance] = None) -> None:
    """Writes ``stage,log2C,log2gamma,Cplus,Cminus,kappa_mean`` per evaluated candidate."""
    frame = pd.DataFrame(
        [
            {
                "stage": e.stage,
                "log2C": e.log2_c,
                "log2gamma": e.log2_gamma,
                "Cplus": e.params.c_plus,
                "Cminus": e.params.c_minus,
                "kappa_mean": e.kappa,
            }
            for e in result.evaluations
        ],
        columns=["stage", "log2C", "log2gamma", "Cplus", "Cminus", "kappa_mean"],
    )
    write_csv_report(path, frame, provenance)

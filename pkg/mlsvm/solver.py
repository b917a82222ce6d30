"""
Weighted RBF SVM trained on the dual with SMO
Maximal-violating-pair working sets, LRU cache of kernel rows, text model files
"""
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp
from sklearn.metrics.pairwise import rbf_kernel as _pairwise_rbf

from .dataset import NormalizationParams
from .exceptions import (ConvergenceError, DataFormatError, DimensionMismatchError, DomainError,
                         ModelFileError, ValidationError)
from .parser import FormatParser
from .storage import atomic_write_text

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000
DEFAULT_CACHE_MB = 100.0
MIN_CURVATURE = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Class penalties C+ and C- and the RBF width gamma."""
    c_plus: float
    c_minus: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("c_plus", "c_minus", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value}.")

    @property
    def log2_c_plus(self) -> float:
        return math.log2(self.c_plus)

    @property
    def log2_c_minus(self) -> float:
        return math.log2(self.c_minus)

    @property
    def log2_gamma(self) -> float:
        return math.log2(self.gamma)


@dataclass(frozen=True)
class TrainedModel:
    """A trained weighted SVM.

    Attributes:
        support_vectors (np.ndarray): SV rows.
        dual_coefs (np.ndarray): alpha_i * y_i per SV.
        bias (float): Offset b of the decision function.
        params (ModelParams): Parameters the model was trained with.
        sv_indices (np.ndarray): SV positions in the training rows.
        dual_objective (float): Dual objective at the returned iterate.
        iterations (int): SMO pair updates performed.
        normalization (Optional[NormalizationParams]): Feature scaling to apply to raw inputs.
    """
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    params: ModelParams
    sv_indices: np.ndarray
    dual_objective: float = float("nan")
    iterations: int = 0
    normalization: Optional[NormalizationParams] = None

    @property
    def n_sv(self) -> int:
        return self.support_vectors.shape[0]

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def sv_labels(self) -> np.ndarray:
        return np.where(self.dual_coefs > 0, 1, -1)


def rbf_kernel(xi, xj, gamma: float) -> float:
    """exp(-gamma * ||xi - xj||^2)."""
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}.")
    diff = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    return math.exp(-gamma * float(diff @ diff))


class KernelCache:
    """LRU cache of kernel matrix rows under a byte budget."""

    def __init__(self, x: np.ndarray, gamma: float, cache_mb: float = DEFAULT_CACHE_MB) -> None:
        self.x = x
        self.gamma = gamma
        row_bytes = max(x.shape[0] * 8, 1)
        self.capacity = max(2, int(cache_mb * 1024 * 1024) // row_bytes)
        self.rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        cached = self.rows.get(i)
        if cached is not None:
            self.rows.move_to_end(i)
            self.hits += 1
            return cached

        self.misses += 1
        values = _pairwise_rbf(self.x[i:i + 1], self.x, gamma=self.gamma)[0]
        values[i] = 1.0
        self.rows[i] = values
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return values


def _as_dense(points) -> np.ndarray:
    return points.toarray() if sp.issparse(points) else np.asarray(points, dtype=float)


def train(points, labels, params: ModelParams, instance_weights: Optional[np.ndarray] = None,
          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          cache_mb: float = DEFAULT_CACHE_MB) -> TrainedModel:
    """Solves the weighted soft-margin dual with SMO.

    The box of point t is C+ * w_t for positives and C- * w_t for negatives.
    Each step updates the maximal violating pair; the loop stops once the
    violation gap is at most ``tol``.

    Args:
        points: n x d training rows.
        labels: Labels in {-1, +1}, both present.
        params: Penalties and kernel width.
        instance_weights: Positive per-row weights (default 1).
        tol: KKT tolerance.
        max_iter: Cap on pair updates.
        cache_mb: Kernel row cache budget in megabytes.

    Returns:
        TrainedModel: Model holding only the support vectors.

    Raises:
        DomainError: If a class is missing.
        ConvergenceError: If ``max_iter`` is reached; carries the last iterate as ``best_model``.
    """
    x = _as_dense(points)
    y = np.asarray(labels, dtype=float)
    n = x.shape[0]
    if y.shape != (n,):
        raise DimensionMismatchError(f"{y.shape[0]} labels for {n} rows.")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise DomainError("training needs at least one point of each class.")
    weights = np.ones(n) if instance_weights is None else np.asarray(instance_weights, dtype=float)
    if weights.shape != (n,) or not np.all(weights > 0):
        raise ValidationError("instance weights must be positive, one per row.")

    box = np.where(y > 0, params.c_plus, params.c_minus) * weights
    lower = np.where(y > 0, 0.0, -box)
    upper = np.where(y > 0, box, 0.0)

    beta = np.zeros(n)      # y * alpha
    grad = y.copy()         # y * gradient of the dual
    cache = KernelCache(x, params.gamma, cache_mb)

    iterations = 0
    converged = False
    while True:
        up = beta < upper
        low = beta > lower
        i = int(np.argmax(np.where(up, grad, -np.inf)))
        j = int(np.argmin(np.where(low, grad, np.inf)))
        gap = grad[i] - grad[j]
        if gap <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break

        k_i, k_j = cache.row(i), cache.row(j)
        curvature = max(k_i[i] + k_j[j] - 2.0 * k_i[j], MIN_CURVATURE)
        room_i = upper[i] - beta[i]
        room_j = beta[j] - lower[j]
        step = min(room_i, room_j, gap / curvature)
        assert step * gap - 0.5 * step * step * curvature >= -1e-12, "dual objective decreased"

        beta[i] = upper[i] if step == room_i else beta[i] + step
        beta[j] = lower[j] if step == room_j else beta[j] - step
        grad += step * (k_j - k_i)
        iterations += 1

    model = _assemble(x, y, beta, grad, lower, upper, params, iterations)
    logger.debug("SMO: n=%d iterations=%d n_sv=%d cache hits=%d misses=%d",
                 n, iterations, model.n_sv, cache.hits, cache.misses)
    if not converged:
        raise ConvergenceError(f"SMO did not converge within {max_iter} pair updates.", best_model=model)
    return model


def _assemble(x: np.ndarray, y: np.ndarray, beta: np.ndarray, grad: np.ndarray, lower: np.ndarray,
              upper: np.ndarray, params: ModelParams, iterations: int) -> TrainedModel:
    free = (beta > lower) & (beta < upper)
    if np.any(free):
        bias = float(grad[free].mean())
    else:
        up = beta < upper
        low = beta > lower
        top = grad[up].max() if np.any(up) else grad[low].min()
        bottom = grad[low].min() if np.any(low) else top
        bias = 0.5 * float(top + bottom)

    alpha = y * beta
    objective = 0.5 * float(alpha @ (1.0 + y * grad))
    sv = np.flatnonzero(beta != 0)
    return TrainedModel(
        support_vectors=x[sv].copy(),
        dual_coefs=beta[sv].copy(),
        bias=bias,
        params=params,
        sv_indices=sv,
        dual_objective=objective,
        iterations=iterations,
    )


def decision_values(model: TrainedModel, points, chunk_size: int = 4096) -> np.ndarray:
    """Batch kernel expansion sum(alpha_i y_i K(x_i, x)) + b."""
    x = _as_dense(points)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"model expects {model.n_features} features, got {x.shape[-1] if x.ndim else 0}."
        )
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk_size):
        block = _pairwise_rbf(x[start:start + chunk_size], model.support_vectors, gamma=model.params.gamma)
        out[start:start + chunk_size] = block @ model.dual_coefs + model.bias
    return out


def decision_value(model: TrainedModel, x) -> float:
    return float(decision_values(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


def predict(model: TrainedModel, points) -> np.ndarray:
    """Signs of the decision values; exactly 0 maps to +1."""
    return np.where(decision_values(model, points) >= 0, 1, -1).astype(np.int8)


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: TrainedModel, path: str) -> None:
    """Writes a model as ``key = value`` settings, an ``sv`` marker and one SV line each.

    SV lines read ``alpha_y index:value ...`` with 1-based indices; zero
    features are omitted. Floats use ``repr`` so loading is exact.
    """
    p = model.params
    lines = [
        "# mlsvm model",
        "kernel = rbf",
        f"c_plus = {p.c_plus!r}",
        f"c_minus = {p.c_minus!r}",
        f"gamma = {p.gamma!r}",
        f"bias = {float(model.bias)!r}",
        f"n_features = {model.n_features}",
        f"n_sv = {model.n_sv}",
        "sv_indices = " + " ".join(str(int(i)) for i in model.sv_indices),
    ]
    if model.normalization is not None and model.normalization.mode != "none":
        lines.append(f"normalization = {model.normalization.mode}")
        lines.append("norm_shift = " + _floats(model.normalization.shift))
        lines.append("norm_scale = " + _floats(model.normalization.scale))
    lines.append("sv")
    for coef, row in zip(model.dual_coefs, model.support_vectors):
        pairs = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0.0]
        lines.append(" ".join([repr(float(coef))] + pairs))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _split_values(value, cast) -> List:
    if isinstance(value, str):
        return [cast(v) for v in value.split()]
    return [cast(value)]


def load_model(path: str) -> TrainedModel:
    """Reads a model written by :func:`save_model`.

    Raises:
        FileNotFoundError: If the file is missing.
        ModelFileError: If the file is corrupt.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model file not found: {path}")
    parser = FormatParser()
    header: Dict[str, object] = {}
    coefs: List[float] = []
    rows: List[List] = []

    try:
        with open(path, "r") as f:
            in_body = False
            for line_no, line in enumerate(f, start=1):
                if not in_body:
                    if line.strip() == "sv":
                        in_body = True
                        continue
                    parsed = parser.parse_setting(line, line_no)
                    if parsed['type'] == 'SETTING':
                        header[parsed['key']] = parsed['value']
                    continue
                parsed = parser.parse_sample(line, line_no)
                if parsed['type'] == 'BLANK':
                    continue
                if parsed['label'] is None:
                    raise DataFormatError("support vector line without coefficient", line_no)
                coefs.append(parser.parse_float(parsed['label'], line_no))
                rows.append(parsed['features'])

        if header.get("kernel") != "rbf":
            raise ModelFileError(f"unsupported or missing kernel in '{path}'.")
        n_features = int(header["n_features"])
        n_sv = int(header["n_sv"])
        if len(coefs) != n_sv or n_sv == 0:
            raise ModelFileError(f"'{path}' declares {n_sv} support vectors, found {len(coefs)}.")

        support_vectors = np.zeros((n_sv, n_features))
        for r, features in enumerate(rows):
            for j, value in features:
                support_vectors[r, j] = value
        sv_indices = np.array(_split_values(header["sv_indices"], int), dtype=np.int64)

        normalization = None
        if "normalization" in header:
            normalization = NormalizationParams(
                str(header["normalization"]),
                np.array(_split_values(header["norm_shift"], float)),
                np.array(_split_values(header["norm_scale"], float)),
            )
        params = ModelParams(float(header["c_plus"]), float(header["c_minus"]), float(header["gamma"]))
        return TrainedModel(
            support_vectors=support_vectors,
            dual_coefs=np.array(coefs),
            bias=float(header["bias"]),
            params=params,
            sv_indices=sv_indices,
            normalization=normalization,
        )
    except ModelFileError:
        raise
    except (DataFormatError, ValidationError, KeyError, ValueError, IndexError, TypeError) as e:
        raise ModelFileError(f"corrupt model file '{path}': {e}")

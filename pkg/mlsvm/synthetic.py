"""
Reproducible synthetic benchmark data
"""
import math

import numpy as np

from .dataset import Dataset
from .exceptions import ValidationError


def _assemble(plus: np.ndarray, minus: np.ndarray, rng: np.random.Generator) -> Dataset:
    points = np.vstack([plus, minus])
    labels = np.concatenate([np.ones(plus.shape[0], dtype=np.int8), -np.ones(minus.shape[0], dtype=np.int8)])
    order = rng.permutation(points.shape[0])
    return Dataset(points[order], labels[order])


def _class_sizes(n: int, r_imb: float):
    if n < 2:
        raise ValidationError(f"need at least 2 points, got {n}.")
    if not 0.0 < r_imb < 1.0:
        raise ValidationError(f"r_imb must lie in (0, 1), got {r_imb}.")
    n_minus = min(max(int(round(r_imb * n)), 1), n - 1)
    return n - n_minus, n_minus


def make_two_gaussians(n: int, d: int = 2, r_imb: float = 0.5, separation: float = 2.0,
                       seed: int = 0) -> Dataset:
    """Two unit-variance Gaussians ``separation`` apart along the first axis.

    The majority (-1) class holds a share ``r_imb`` of the points.
    """
    rng = np.random.default_rng(seed)
    n_plus, n_minus = _class_sizes(n, r_imb)
    shift = np.zeros(d)
    shift[0] = separation
    plus = rng.standard_normal((n_plus, d)) + shift
    minus = rng.standard_normal((n_minus, d))
    return _assemble(plus, minus, rng)


def make_twonorm(n: int, d: int = 20, seed: int = 0) -> Dataset:
    """Balanced N(a, I) versus N(-a, I) with every coordinate of a equal to 2 / sqrt(d)."""
    rng = np.random.default_rng(seed)
    n_plus, n_minus = _class_sizes(n, 0.5)
    a = 2.0 / math.sqrt(d)
    plus = rng.standard_normal((n_plus, d)) + a
    minus = rng.standard_normal((n_minus, d)) - a
    return _assemble(plus, minus, rng)


def make_ringnorm(n: int, d: int = 20, seed: int = 0) -> Dataset:
    """Balanced N(0, 4I) (+1) versus N(a, I) (-1) with every coordinate of a equal to 1 / sqrt(d)."""
    rng = np.random.default_rng(seed)
    n_plus, n_minus = _class_sizes(n, 0.5)
    a = 1.0 / math.sqrt(d)
    plus = 2.0 * rng.standard_normal((n_plus, d))
    minus = rng.standard_normal((n_minus, d)) + a
    return _assemble(plus, minus, rng)


GENERATORS = {
    "gaussians": make_two_gaussians,
    "twonorm": make_twonorm,
    "ringnorm": make_ringnorm,
}

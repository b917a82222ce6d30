"""
Run configuration
Compiled defaults, overridden by a ``key = value`` config file, overridden by command-line flags
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

from .coarsening import CoarseningConfig
from .dataset import FORMATS, NORMALIZATION_MODES
from .engine import MultilevelConfig
from .exceptions import DataFormatError, ValidationError
from .model_selection import SearchDomain, parse_weight_rule
from .parser import FormatParser

logger = logging.getLogger(__name__)

MODES = ("multilevel", "flat")

# spellings accepted in config files besides the field names themselves
ALIASES = {
    "qdt": "q_dt",
    "r": "caliber",
    "format": "fmt",
    "reps": "repetitions",
    "jobs": "n_jobs",
    "ud_g_range": "ud_gamma_range",
}


@dataclass
class RunConfig:
    """Resolved settings of one command invocation."""
    command: str = "train"
    data: Optional[str] = None
    fmt: str = "svm"
    label_column: Optional[int] = None
    mode: str = "multilevel"
    repetitions: int = 20
    out: Optional[str] = None
    normalize: str = "minmax"
    test_fraction: float = 0.2
    sweep_r: Tuple[int, ...] = ()
    # graph and coarsening
    k: int = 10
    knn_mode: str = "auto"
    q: float = 0.5
    eta: float = 2.0
    caliber: int = 2
    stop_size: int = 500
    max_levels: int = 50
    coarse_edges: str = "knn"
    # learning
    q_dt: int = 4000
    ud_c_range: Tuple[float, float] = (-5.0, 15.0)
    ud_gamma_range: Tuple[float, float] = (-15.0, 3.0)
    stage1_runs: int = 9
    stage2_runs: int = 5
    weight_rule: str = "imbalance"
    folds: int = 5
    tol: float = 1e-3
    max_iter: int = 10_000_000
    cache_mb: float = 100.0
    neighbor_expand: bool = False
    volume_weighting: bool = False
    validation_fraction: float = 0.1
    seed: int = 0
    n_jobs: int = 1

    def to_multilevel_config(self, caliber: Optional[int] = None) -> MultilevelConfig:
        """Engine settings; ``caliber`` overrides R for sweeps."""
        coarsening = CoarseningConfig(
            q=self.q, eta=self.eta, caliber=self.caliber if caliber is None else caliber, k=self.k,
            stop_size=self.stop_size, max_levels=self.max_levels, coarse_edges=self.coarse_edges,
            knn_mode=self.knn_mode, seed=self.seed,
        )
        domain = SearchDomain(
            log2_c_range=tuple(self.ud_c_range), log2_gamma_range=tuple(self.ud_gamma_range),
            stage1_runs=self.stage1_runs, stage2_runs=self.stage2_runs,
            weight_rule=parse_weight_rule(self.weight_rule),
        )
        return MultilevelConfig(
            coarsening=coarsening, q_dt=self.q_dt, domain=domain, folds=self.folds, tol=self.tol,
            max_iter=self.max_iter, cache_mb=self.cache_mb, neighbor_expand=self.neighbor_expand,
            volume_weighting=self.volume_weighting, validation_fraction=self.validation_fraction,
            seed=self.seed, n_jobs=self.n_jobs,
        )

    def validate(self) -> None:
        """Checks every field range.

        Raises:
            ValidationError: On the first invalid value.
        """
        if self.fmt not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}, got '{self.fmt}'.")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got '{self.mode}'.")
        if self.normalize not in NORMALIZATION_MODES:
            raise ValidationError(f"normalize must be one of {NORMALIZATION_MODES}, got '{self.normalize}'.")
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be at least 1, got {self.repetitions}.")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError(f"test_fraction must lie in (0, 1), got {self.test_fraction}.")
        for r in self.sweep_r:
            if not 1 <= r <= 10:
                raise ValidationError(f"sweep R values must lie in 1..10, got {r}.")
        if self.label_column is not None and self.label_column < 0:
            raise ValidationError(f"label_column must be non-negative, got {self.label_column}.")
        self.to_multilevel_config().validate()

    def provenance(self) -> List[Tuple[str, Any]]:
        """(key, value) pairs of every setting, in declaration order."""
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            out.append((f.name, value))
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _to_list(value: Any) -> List[Any]:
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, str):
        return [v for v in value.replace(",", " ").split() if v]
    return [value]


def coerce_setting(key: str, value: Any) -> Any:
    """Converts a raw setting to the type of the RunConfig field ``key``.

    Raises:
        ValidationError: On an unknown key or an unconvertible value.
    """
    name = ALIASES.get(key, key)
    if name not in _FIELD_TYPES:
        raise ValidationError(f"unknown setting '{key}'.")
    kind = _FIELD_TYPES[name]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            lowered = str(value).lower()
            if lowered not in ("true", "false", "yes", "no", "on", "off", "1", "0"):
                raise ValueError(value)
            return lowered in ("true", "yes", "on", "1")
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "Optional[int]":
            return None if value in (None, "", "none") else int(value)
        if kind == "Tuple[float, float]":
            lo, hi = (float(v) for v in _to_list(value))
            return (lo, hi)
        if kind == "Tuple[int, ...]":
            return tuple(int(float(v)) for v in _to_list(value))
        return None if value is None else str(value)
    except (TypeError, ValueError):
        raise ValidationError(f"invalid value {value!r} for '{key}'.")


def load_config_file(path: str) -> Dict[str, Any]:
    """Reads ``key = value`` lines (``#`` comments allowed) into typed RunConfig fields.

    Raises:
        FileNotFoundError: If the file is missing.
        ValidationError: On a malformed line or unknown key, naming the line number.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    parser = FormatParser()
    settings: Dict[str, Any] = {}
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            try:
                parsed = parser.parse_setting(line, line_no)
            except DataFormatError as e:
                raise ValidationError(f"{path}: {e}")
            if parsed['type'] == 'BLANK':
                continue
            try:
                value = coerce_setting(parsed['key'], parsed['value'])
            except ValidationError as e:
                raise ValidationError(f"{path}: line {line_no}: {e}")
            settings[ALIASES.get(parsed['key'], parsed['key'])] = value
    logger.debug("config %s: %s", path, settings)
    return settings


def resolve_config(command: str, config_path: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Builds a validated RunConfig: defaults < config file < explicit overrides.

    Overrides whose value is None are ignored, so unset flags fall through.
    """
    values: Dict[str, Any] = {}
    if config_path:
        values.update(load_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[ALIASES.get(key, key)] = coerce_setting(key, value)
    values["command"] = command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg

"""
Repeated train/test benchmark of flat and multilevel training
Each repetition r reshuffles and re-splits with seed = base seed + r.
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import MODES, RunConfig
from .dataset import Dataset, apply_normalization, load_dataset, normalize_features, shuffle_dataset, stratified_split
from .engine import predict_final, train_flat, train_multilevel
from .exceptions import MLSVMError, ValidationError
from .lock_manager import LockManager
from .storage import append_csv_rows, write_csv_report

logger = logging.getLogger(__name__)

RAW_COLUMNS = ["dataset", "mode", "R", "rep", "seed", "n_train", "n_test", "acc", "sn", "sp", "kappa",
               "n_sv", "seconds", "error"]
METRIC_COLUMNS = ["acc", "sn", "sp", "kappa", "seconds"]


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    path: str
    fmt: str = "svm"
    label_column: Optional[int] = None


def read_dataset_list(path: str) -> List[DatasetEntry]:
    """Reads ``name path [format [label_column]]`` lines; ``#`` starts a comment.

    Relative data paths are taken relative to the list file.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset list not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if len(parts) < 2 or len(parts) > 4:
                raise ValidationError(f"{path}: line {line_no}: expected 'name path [format [label_column]]'.")
            data_path = parts[1] if os.path.isabs(parts[1]) else os.path.join(base, parts[1])
            fmt = parts[2] if len(parts) > 2 else "svm"
            try:
                label_column = int(parts[3]) if len(parts) > 3 else None
            except ValueError:
                raise ValidationError(f"{path}: line {line_no}: label column must be an integer, got '{parts[3]}'.")
            entries.append(DatasetEntry(parts[0], data_path, fmt, label_column))
    if not entries:
        raise ValidationError(f"{path}: no datasets listed.")
    return entries


def _failed_row(name: str, mode: str, caliber: int, rep: int, seed: int, error: str) -> Dict[str, Any]:
    row = {c: np.nan for c in RAW_COLUMNS}
    row.update(dataset=name, mode=mode, R=caliber, rep=rep, seed=seed, error=error)
    return row


def run_repetition(ds: Dataset, name: str, mode: str, rep: int, cfg: RunConfig,
                   caliber: Optional[int] = None) -> Dict[str, Any]:
    """Shuffles, splits, normalizes, trains and scores one repetition.

    Failures are returned as a row with an ``error`` message.
    """
    seed = cfg.seed + rep
    caliber = cfg.caliber if caliber is None else caliber
    try:
        shuffled, _ = shuffle_dataset(ds, seed)
        train_set, test_set = stratified_split(shuffled, cfg.test_fraction, seed)
        train_set, norm = normalize_features(train_set, cfg.normalize)
        test_set = apply_normalization(test_set, norm)

        ml_cfg = cfg.to_multilevel_config(caliber)
        ml_cfg.seed = seed
        ml_cfg.coarsening.seed = seed
        started = time.perf_counter()
        result = train_flat(train_set, ml_cfg) if mode == "flat" else train_multilevel(train_set, ml_cfg)
        seconds = time.perf_counter() - started
        metrics = predict_final(result.model, test_set)
    except MLSVMError as e:
        logger.warning("%s/%s rep %d failed: %s", name, mode, rep, e)
        return _failed_row(name, mode, caliber, rep, seed, str(e))
    except Exception as e:
        logger.exception("%s/%s rep %d crashed", name, mode, rep)
        return _failed_row(name, mode, caliber, rep, seed, f"{type(e).__name__}: {e}")

    return {
        "dataset": name, "mode": mode, "R": caliber, "rep": rep, "seed": seed,
        "n_train": len(train_set), "n_test": len(test_set),
        "acc": metrics.acc, "sn": metrics.sn, "sp": metrics.sp, "kappa": metrics.kappa,
        "n_sv": result.model.n_sv, "seconds": seconds, "error": "",
    }


def aggregate(raw: pd.DataFrame, keys: List[str]) -> pd.DataFrame:
    """Mean metrics and time per group, with counts of finished and failed repetitions."""
    grouped = raw.groupby(keys, sort=True)
    out = grouped[METRIC_COLUMNS].mean()
    out["reps"] = grouped["kappa"].count()
    out["failures"] = grouped["error"].apply(lambda e: int((e.fillna("") != "").sum()))
    return out.reset_index()


def _sorted(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=RAW_COLUMNS)
    return frame.sort_values(["dataset", "mode", "R", "rep"], kind="mergesort").reset_index(drop=True)


def run_benchmark(cfg: RunConfig, list_path: str, out_dir: str) -> Tuple[pd.DataFrame, pd.DataFrame, Optional[pd.DataFrame]]:
    """Runs every dataset x mode x repetition and writes the reports.

    Writes ``raw.csv`` and ``aggregate.csv`` into ``out_dir``, plus
    ``sweep.csv`` (multilevel runs keyed by R) when ``cfg.sweep_r`` is set.
    Rows are appended to ``raw.csv`` under its lock as repetitions finish and
    the file is rewritten sorted at the end.

    Returns:
        Tuple[pd.DataFrame, pd.DataFrame, Optional[pd.DataFrame]]: raw, aggregate and sweep tables.
    """
    entries = read_dataset_list(list_path)
    os.makedirs(out_dir, exist_ok=True)
    locks = LockManager()
    for stale in locks.cleanup_stale_locks(out_dir):
        logger.warning("removed stale lock of %s", stale)

    provenance = cfg.provenance() + [("dataset_list", list_path)]
    raw_path = os.path.join(out_dir, "raw.csv")
    if os.path.exists(raw_path):
        os.remove(raw_path)

    # repetitions run in parallel; keep tuning itself single-threaded then
    rep_cfg = replace(cfg, n_jobs=1) if cfg.n_jobs > 1 else cfg

    def record(row: Dict[str, Any]) -> Dict[str, Any]:
        append_csv_rows(raw_path, pd.DataFrame([row], columns=RAW_COLUMNS), provenance, locks)
        return row

    raw_rows: List[Dict[str, Any]] = []
    sweep_rows: List[Dict[str, Any]] = []
    for entry in entries:
        try:
            ds = load_dataset(entry.path, entry.fmt, entry.label_column)
        except (MLSVMError, OSError) as e:
            logger.error("dataset %s failed to load: %s", entry.name, e)
            for mode in MODES:
                for rep in range(cfg.repetitions):
                    raw_rows.append(record(_failed_row(entry.name, mode, cfg.caliber, rep, cfg.seed + rep, str(e))))
            continue

        tasks = [(mode, rep, None) for mode in MODES for rep in range(cfg.repetitions)]
        tasks += [("multilevel", rep, r) for r in cfg.sweep_r for rep in range(cfg.repetitions)]

        def execute(task):
            mode, rep, caliber = task
            row = run_repetition(ds, entry.name, mode, rep, rep_cfg, caliber)
            return task, (record(row) if caliber is None else row)

        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
                results = list(pool.map(execute, tasks))
        else:
            results = [execute(t) for t in tasks]

        for (mode, rep, caliber), row in results:
            (raw_rows if caliber is None else sweep_rows).append(row)
        logger.info("dataset %s done (%d runs)", entry.name, len(tasks))

    raw = _sorted(raw_rows)
    write_csv_report(raw_path, raw, provenance)
    summary = aggregate(raw, ["dataset", "mode"])
    write_csv_report(os.path.join(out_dir, "aggregate.csv"), summary, provenance)

    sweep = None
    if cfg.sweep_r:
        sweep = aggregate(_sorted(sweep_rows), ["dataset", "R"])
        write_csv_report(os.path.join(out_dir, "sweep.csv"), sweep, provenance)
    return raw, summary, sweep

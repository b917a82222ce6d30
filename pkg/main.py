import logging
import os
import sys
from dataclasses import replace
from functools import wraps

import click

from mlsvm.benchmark import run_benchmark
from mlsvm.config import MODES, resolve_config
from mlsvm.dataset import FORMATS, NORMALIZATION_MODES, apply_normalization, load_dataset, normalize_features, save_dataset
from mlsvm.engine import predict_final, train_flat, train_multilevel, write_level_report
from mlsvm.exceptions import MLSVMError, ModelFileError, ValidationError
from mlsvm.knn_graph import KNN_MODES
from mlsvm.coarsening import COARSE_EDGE_MODES
from mlsvm.model_selection import write_tuning_trace
from mlsvm.solver import load_model, predict, save_model
from mlsvm.storage import atomic_write_text
from mlsvm.synthetic import GENERATORS

logger = logging.getLogger("mlsvm")

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BAD_MODEL = 3

DEFAULT_MODEL_PATH = "model.txt"


def _handle_errors(command):
    """Maps library exceptions onto exit codes: 2 usage/missing input, 3 corrupt model, 1 otherwise."""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except FileNotFoundError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except ValidationError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except ModelFileError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_BAD_MODEL)
        except MLSVMError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_FAILURE)
    return wrapper


def _range(ctx, param, value):
    """Click callback for ``lo,hi`` pairs."""
    if value is None:
        return None
    try:
        lo, hi = (float(v) for v in value.split(","))
    except ValueError:
        raise click.BadParameter("expected 'lo,hi'")
    return (lo, hi)


def _int_list(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("expected comma-separated integers")


LEARNING_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="key = value settings file."),
    click.option("--format", "fmt", type=click.Choice(FORMATS), default=None, help="Input format."),
    click.option("--label-column", type=int, default=None, help="0-based label column for CSV input."),
    click.option("--seed", type=int, default=None),
    click.option("--k", type=int, default=None, help="Neighbours per node in the k-NN graph."),
    click.option("--knn-mode", type=click.Choice(KNN_MODES), default=None),
    click.option("--Q", "q", type=float, default=None, help="Seed coupling threshold."),
    click.option("--eta", type=float, default=None, help="Future-volume outlier factor."),
    click.option("--R", "caliber", type=int, default=None, help="Interpolation caliber."),
    click.option("--stop-size", type=int, default=None),
    click.option("--max-levels", type=int, default=None),
    click.option("--qdt", "q_dt", type=int, default=None, help="Re-tune while training sets are smaller than this."),
    click.option("--ud-c-range", callback=_range, default=None, help="log2 C range 'lo,hi'."),
    click.option("--ud-g-range", "ud_gamma_range", callback=_range, default=None, help="log2 gamma range 'lo,hi'."),
    click.option("--weight-rule", default=None, help="'imbalance' or 'fixed:<r>'."),
    click.option("--folds", type=int, default=None),
    click.option("--tol", type=float, default=None),
    click.option("--coarse-edges", type=click.Choice(COARSE_EDGE_MODES), default=None),
    click.option("--neighbor-expand/--no-neighbor-expand", default=None),
    click.option("--volume-weighting/--no-volume-weighting", default=None),
    click.option("--normalize", type=click.Choice(NORMALIZATION_MODES), default=None),
    click.option("--jobs", "n_jobs", type=int, default=None, help="Worker threads."),
]


def learning_options(command):
    for option in reversed(LEARNING_OPTIONS):
        command = option(command)
    return command


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (repeat for debug).")
@click.option("-q", "--quiet", is_flag=True, help="Only warnings and errors.")
def cli(verbose, quiet):
    """Multilevel weighted SVM training for imbalanced binary data."""
    level = logging.WARNING if quiet else (logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Training data file.")
@click.option("--mode", type=click.Choice(MODES), default=None)
@click.option("--out", default=None, help=f"Model file to write (default {DEFAULT_MODEL_PATH}).")
@click.option("--report", default=None, help="Per-level CSV report (default <out>.levels.csv).")
@click.option("--trace", default=None, help="Optional CSV trace of the last tuning run.")
@learning_options
@_handle_errors
def train(data, mode, out, report, trace, config_path, **flags):
    """Train a model and write it with its per-level report."""
    cfg = resolve_config("train", config_path, dict(flags, data=data, mode=mode, out=out))
    ds = load_dataset(cfg.data, cfg.fmt, cfg.label_column)
    ds, norm = normalize_features(ds, cfg.normalize)

    ml_cfg = cfg.to_multilevel_config()
    result = train_flat(ds, ml_cfg) if cfg.mode == "flat" else train_multilevel(ds, ml_cfg)
    model = replace(result.model, normalization=norm)
    out = cfg.out or DEFAULT_MODEL_PATH
    save_model(model, out)

    provenance = cfg.provenance()
    write_level_report(result, report or f"{out}.levels.csv", provenance)
    if trace and result.last_tuning is not None:
        write_tuning_trace(result.last_tuning, trace, provenance)

    p = model.params
    click.echo(f"model: {out} ({model.n_sv} support vectors, {len(result.reports)} levels)")
    click.echo(f"C+={p.c_plus:.6g} C-={p.c_minus:.6g} gamma={p.gamma:.6g}")


@cli.command(name="predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="svm", show_default=True)
@click.option("--label-column", type=int, default=None)
@click.option("--out", default=None, help="Predictions file (one label per line); stdout when omitted.")
@_handle_errors
def predict_command(model_path, data, fmt, label_column, out):
    """Predict labels for a data file; print metrics when it is labeled."""
    model = load_model(model_path)
    ds = load_dataset(data, fmt, label_column, n_features=model.n_features if fmt == "svm" else None)
    if model.normalization is not None:
        ds = apply_normalization(ds, model.normalization)

    labels = predict(model, ds.points)
    text = "\n".join("+1" if v == 1 else "-1" for v in labels) + "\n"
    if out:
        atomic_write_text(out, text)
    else:
        click.echo(text, nl=False)

    if ds.is_labeled:
        m = predict_final(model, ds)
        click.echo(f"ACC={m.acc:.4f} SN={m.sn:.4f} SP={m.sp:.4f} kappa={m.kappa:.4f}", err=out is None)


@cli.command()
@click.option("--list", "list_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Dataset list: 'name path [format [label_column]]' per line.")
@click.option("--out", default="results", show_default=True, help="Output directory.")
@click.option("--reps", "repetitions", type=int, default=None, help="Repetitions per dataset and mode.")
@click.option("--test-fraction", type=float, default=None)
@click.option("--sweep-R", "sweep_r", callback=_int_list, default=None, help="Comma-separated calibers, e.g. 1,2,4.")
@learning_options
@_handle_errors
def benchmark(list_path, out, repetitions, test_fraction, sweep_r, config_path, **flags):
    """Repeated 80/20 runs of flat and multilevel training over a dataset list."""
    cfg = resolve_config("benchmark", config_path,
                         dict(flags, repetitions=repetitions, test_fraction=test_fraction, sweep_r=sweep_r, out=out))
    raw, summary, sweep = run_benchmark(cfg, list_path, out)
    click.echo(summary.to_string(index=False))
    if sweep is not None:
        click.echo(sweep.to_string(index=False))
    click.echo(f"{len(raw)} runs written to {os.path.join(out, 'raw.csv')}")


@cli.command()
@click.option("--kind", type=click.Choice(sorted(GENERATORS)), default="twonorm", show_default=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--d", type=int, default=20, show_default=True)
@click.option("--r-imb", type=float, default=0.5, show_default=True, help="Majority share (gaussians only).")
@click.option("--separation", type=float, default=2.0, show_default=True, help="Class distance (gaussians only).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, help="Sparse text file to write.")
@_handle_errors
def generate(kind, n, d, r_imb, separation, seed, out):
    """Write a synthetic dataset."""
    if kind == "gaussians":
        ds = GENERATORS[kind](n, d, r_imb, separation, seed)
    else:
        ds = GENERATORS[kind](n, d, seed)
    save_dataset(ds, out)
    click.echo(f"{out}: n={len(ds)} d={ds.n_features} n_plus={ds.n_plus} n_minus={ds.n_minus}")


if __name__ == "__main__":
    cli()
